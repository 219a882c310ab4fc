#include "spat/data/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spat/errors.hpp"

namespace spat {

PrickLayout PrickLayout::grid(double spacing_x_mm, double spacing_y_mm) {
    PrickLayout layout;
    std::size_t i = 0;
    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 4; ++col) {
            layout.points_mm[i++] = {(col - 1.5) * spacing_x_mm, (row - 1.0) * spacing_y_mm};
        }
    }
    return layout;
}

Point RigidTransform2D::apply(Point p) const {
    const double t = theta_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t);
    const double s = std::sin(t);
    return {c * p.x - s * p.y + tx_mm, s * p.x + c * p.y + ty_mm};
}

Point mm_to_px(Point p, std::size_t width, std::size_t height, double mm_per_px) {
    return {static_cast<double>(width) / 2.0 + p.x / mm_per_px,
            static_cast<double>(height) / 2.0 + p.y / mm_per_px};
}

Point px_to_mm(Point p, std::size_t width, std::size_t height, double mm_per_px) {
    return {(p.x - static_cast<double>(width) / 2.0) * mm_per_px,
            (p.y - static_cast<double>(height) / 2.0) * mm_per_px};
}

double signed_area(const Polygon& poly) {
    double a = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

double polygon_area(const Polygon& poly) { return std::abs(signed_area(poly)); }

double polygon_perimeter(const Polygon& poly) {
    double len = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % n];
        len += std::hypot(q.x - p.x, q.y - p.y);
    }
    return len;
}

Point polygon_centroid(const Polygon& poly) {
    double a = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % n];
        const double cross = p.x * q.y - q.x * p.y;
        a += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    if (std::abs(a) < 1e-12) throw DataError("centroid of a degenerate polygon");
    return {cx / (3.0 * a), cy / (3.0 * a)};
}

namespace {

template <typename Inside, typename Cross>
Polygon clip_edge(const Polygon& in, Inside inside, Cross cross) {
    Polygon out;
    for (std::size_t i = 0, n = in.size(); i < n; ++i) {
        const Point& cur = in[i];
        const Point& prev = in[(i + n - 1) % n];
        const bool ci = inside(cur);
        const bool pi = inside(prev);
        if (ci) {
            if (!pi) out.push_back(cross(prev, cur));
            out.push_back(cur);
        } else if (pi) {
            out.push_back(cross(prev, cur));
        }
    }
    return out;
}

Point at_x(Point a, Point b, double x) {
    const double t = (x - a.x) / (b.x - a.x);
    return {x, a.y + t * (b.y - a.y)};
}

Point at_y(Point a, Point b, double y) {
    const double t = (y - a.y) / (b.y - a.y);
    return {a.x + t * (b.x - a.x), y};
}

}  // namespace

Polygon clip_to_rect(const Polygon& poly, double w, double h) {
    Polygon p = clip_edge(poly, [](Point q) { return q.x >= 0.0; },
                          [](Point a, Point b) { return at_x(a, b, 0.0); });
    p = clip_edge(p, [w](Point q) { return q.x <= w; }, [w](Point a, Point b) { return at_x(a, b, w); });
    p = clip_edge(p, [](Point q) { return q.y >= 0.0; }, [](Point a, Point b) { return at_y(a, b, 0.0); });
    p = clip_edge(p, [h](Point q) { return q.y <= h; }, [h](Point a, Point b) { return at_y(a, b, h); });
    return p;
}

BinaryMask rasterize_polygon(const Polygon& poly, std::size_t width, std::size_t height) {
    if (poly.size() < 3) {
        throw DataError("polygon needs at least 3 vertices, got " + std::to_string(poly.size()));
    }
    BinaryMask mask(width, height);
    std::vector<double> xs;
    for (std::size_t y = 0; y < height; ++y) {
        const double yc = static_cast<double>(y) + 0.5;
        xs.clear();
        for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
            const Point& a = poly[i];
            const Point& b = poly[(i + 1) % n];
            if ((a.y > yc) != (b.y > yc)) {
                xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        if (xs.empty()) continue;
        std::sort(xs.begin(), xs.end());
        // Centre inside iff an odd number of crossings lie strictly to its right.
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const double lo = std::max(xs[k] - 0.5, 0.0);
            const double hi = xs[k + 1] - 0.5;
            // pixels x with lo <= x and x < hi, i.e. xs[k] <= x + 0.5 < xs[k + 1]
            std::size_t x0 = static_cast<std::size_t>(std::ceil(lo));
            for (std::size_t x = x0; x < width && static_cast<double>(x) < hi; ++x) mask.set(x, y);
        }
    }
    return mask;
}

}  // namespace spat
