#pragma once

#include <array>
#include <optional>
#include <vector>

#include <json.hpp>

#include "spat/data/geometry.hpp"
#include "spat/data/image.hpp"

namespace spat {

// Foreground iff value >= threshold. threshold must lie in (0, 1).
BinaryMask binarize(const FloatMap& map, double threshold = 0.5);

struct WhealRegion {
    std::vector<std::size_t> pixels;  // linear indices y * width + x, ascending
    std::size_t area_px = 0;
    double area_mm2 = 0.0;
    Point centroid;                   // mean of pixel centres
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // bounding box, half-open
};

// Two-pass union-find labelling. Regions come back in decreasing area order,
// ties by smallest first pixel index.
std::vector<WhealRegion> connected_components(const BinaryMask& mask, int connectivity = 8,
                                              double mm_per_px = 1.0);

struct GridAxis {
    double min = 0.0;
    double max = 0.0;
    double step = 0.0;

    // min, min + step, ... up to max (inclusive within 1e-9 steps).
    std::vector<double> values() const;
};

struct GridSpec {
    GridAxis tx{-10.0, 10.0, 0.5};     // mm
    GridAxis ty{-10.0, 10.0, 0.5};     // mm
    GridAxis theta{-5.0, 5.0, 0.5};    // degrees

    // Throws ConfigError for non-positive steps or inverted ranges.
    void validate() const;
};

struct FitFrame {
    std::size_t width = 0;
    std::size_t height = 0;
    double mm_per_px = 0.25;
};

// Grid point minimizing sum_i min(distance(T(prick_i), nearest centroid), gate_mm),
// distances in mm. Equal objectives are resolved by smallest (|tx|, |ty|, |theta|)
// compared lexicographically, then by enumeration order. No regions gives the
// identity transform. `objective` receives the winning value when non-null.
RigidTransform2D fit_rigid_transform(const std::vector<WhealRegion>& regions, const PrickLayout& layout,
                                     const GridSpec& grid, const FitFrame& frame, double gate_mm,
                                     double* objective = nullptr);

double transform_objective(const std::vector<WhealRegion>& regions, const PrickLayout& layout,
                           const RigidTransform2D& t, const FitFrame& frame, double gate_mm);

struct MatchPair {
    std::size_t prick = 0;
    std::size_t region = 0;
    double distance_mm = 0.0;
};

struct MatchResult {
    std::vector<WhealRegion> regions;                                  // candidates considered
    std::array<std::optional<std::size_t>, kPrickCount> prick_region;  // index into regions
    std::vector<MatchPair> accepted;                                   // in acceptance order
    std::vector<std::size_t> unmatched_regions;
    RigidTransform2D transform;
    double objective = 0.0;
};

// Repeatedly accepts the globally closest unmatched (prick, region) pair whose
// distance is below gate_mm. Equal distances resolve by prick, then region index.
MatchResult greedy_match(const std::vector<WhealRegion>& regions, const PrickLayout& layout,
                         const RigidTransform2D& transform, const FitFrame& frame, double gate_mm);

struct DetectConfig {
    double threshold = 0.5;
    int connectivity = 8;
    std::size_t min_area_px = 4;
    double gate_mm = 5.0;
    GridSpec grid;

    void validate() const;
};

struct Detection {
    BinaryMask mask;
    std::vector<WhealRegion> all_regions;  // every component, for diagnostics
    MatchResult match;                     // over regions with area >= min_area_px
};

Detection detect_wheals(const FloatMap& map, double mm_per_px, const PrickLayout& layout, const DetectConfig& config);

// Outer boundary along pixel edges. Vertices are pixel corners; the loop has
// positive shoelace area in pixel coordinates (counter-clockwise with the y
// axis pointing up, clockwise as displayed on screen). Collinear vertices are
// dropped.
Polygon region_contour(const WhealRegion& region, std::size_t width);

// Largest distance between two pixel corners of the region, in mm.
double longest_diameter_mm(const WhealRegion& region, std::size_t width, double mm_per_px);

nlohmann::json match_to_json(const MatchResult& m, std::size_t width, double mm_per_px);

}  // namespace spat
