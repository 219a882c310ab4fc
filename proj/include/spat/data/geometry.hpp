#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "spat/data/image.hpp"

namespace spat {

// Continuous pixel coordinates: pixel (x, y) covers [x, x+1) x [y, y+1), so
// its centre is (x + 0.5, y + 0.5).
struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

using Polygon = std::vector<Point>;  // implicitly closed

inline constexpr std::size_t kPrickCount = 12;

// Theoretical prick positions in device millimetres. The device origin maps
// to the image centre; x grows right and y grows down, like pixel coordinates.
struct PrickLayout {
    std::array<Point, kPrickCount> points_mm{};

    // 3 rows x 4 columns centred on the origin.
    static PrickLayout grid(double spacing_x_mm = 10.0, double spacing_y_mm = 9.0);
};

// Maps device millimetres p to R(theta) p + t. Rotation is about the device
// origin; theta is in degrees.
struct RigidTransform2D {
    double tx_mm = 0.0;
    double ty_mm = 0.0;
    double theta_deg = 0.0;

    Point apply(Point p_mm) const;
    bool operator==(const RigidTransform2D&) const = default;
};

Point mm_to_px(Point p_mm, std::size_t width, std::size_t height, double mm_per_px);
Point px_to_mm(Point p_px, std::size_t width, std::size_t height, double mm_per_px);

// Signed shoelace area; positive for counter-clockwise order in a y-up frame.
double signed_area(const Polygon& polygon);
double polygon_area(const Polygon& polygon);
double polygon_perimeter(const Polygon& polygon);
Point polygon_centroid(const Polygon& polygon);

// Sutherland-Hodgman clip against [0, width] x [0, height].
Polygon clip_to_rect(const Polygon& polygon, double width, double height);

// A pixel is set when its centre lies inside the polygon under the even-odd
// rule. Crossings use half-open edges (y0 <= yc < y1 or y1 <= yc < y0), so a
// centre exactly on a horizontal edge or vertex is counted once. Throws
// DataError for fewer than 3 vertices.
BinaryMask rasterize_polygon(const Polygon& polygon, std::size_t width, std::size_t height);

}  // namespace spat
