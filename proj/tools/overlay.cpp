#include "overlay.hpp"

#include <algorithm>
#include <cmath>

namespace spat::cli {

namespace {

void plot(Image8& img, double x, double y, Rgb c) {
    const double fx = std::floor(x), fy = std::floor(y);
    if (fx < 0 || fy < 0 || fx >= double(img.width) || fy >= double(img.height)) return;
    const std::size_t i = (std::size_t(fy) * img.width + std::size_t(fx)) * 3;
    img.rgb[i] = c[0];
    img.rgb[i + 1] = c[1];
    img.rgb[i + 2] = c[2];
}

}  // namespace

void draw_polygon(Image8& img, const Polygon& poly, Rgb colour) {
    for (std::size_t k = 0; k < poly.size(); ++k) {
        const Point a = poly[k];
        const Point b = poly[(k + 1) % poly.size()];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const int steps = std::max(1, int(std::ceil(len * 2.0)));
        for (int s = 0; s <= steps; ++s) {
            const double t = double(s) / steps;
            plot(img, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), colour);
        }
    }
}

Image8 render_overlay(const Case& c, const MatchResult& match) {
    Image8 img = c.stack.full_light;
    for (const auto& p : c.annotations.polygons) {
        if (p) draw_polygon(img, *p, kGroundTruthColour);
    }
    for (const auto& r : match.prick_region) {
        if (r) draw_polygon(img, region_contour(match.regions[*r], img.width), kDetectedColour);
    }
    return img;
}

}  // namespace spat::cli
