#pragma once

#include <array>
#include <cstdint>

#include "spat/data/dataset.hpp"
#include "spat/detect/detector.hpp"

namespace spat::cli {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kGroundTruthColour{0, 255, 0};
inline constexpr Rgb kDetectedColour{0, 255, 255};

void draw_polygon(Image8& img, const Polygon& poly, Rgb colour);

// Full-light image with ground-truth outlines in green and detected region
// outlines in cyan.
Image8 render_overlay(const Case& c, const MatchResult& match);

}  // namespace spat::cli
