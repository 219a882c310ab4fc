#include "spat/detect/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "spat/errors.hpp"

namespace spat {

using nlohmann::json;

BinaryMask binarize(const FloatMap& map, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("binarize threshold must lie in (0, 1)");
    BinaryMask m(map.width, map.height);
    m.threshold = threshold;
    for (std::size_t i = 0; i < map.values.size(); ++i) m.bits[i] = map.values[i] >= threshold ? 1 : 0;
    return m;
}

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

void unite(std::vector<std::size_t>& parent, std::size_t a, std::size_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (a < b) parent[b] = a;
    else parent[a] = b;
}

}  // namespace

std::vector<WhealRegion> connected_components(const BinaryMask& mask, int connectivity, double mm_per_px) {
    if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
    const std::size_t W = mask.width;
    const std::size_t H = mask.height;
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(W * H, kNone);
    std::vector<std::size_t> parent;

    // Pass 1: provisional labels from the already-visited neighbours.
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            if (!mask.at(x, y)) continue;
            std::size_t best = kNone;
            auto consider = [&](std::size_t nx, std::size_t ny) {
                const std::size_t l = label[ny * W + nx];
                if (l == kNone) return;
                if (best == kNone) best = l;
                else unite(parent, best, l);
            };
            if (x > 0) consider(x - 1, y);
            if (y > 0) {
                consider(x, y - 1);
                if (connectivity == 8) {
                    if (x > 0) consider(x - 1, y - 1);
                    if (x + 1 < W) consider(x + 1, y - 1);
                }
            }
            if (best == kNone) {
                best = parent.size();
                parent.push_back(best);
            }
            label[y * W + x] = best;
        }
    }

    // Pass 2: resolve equivalences and gather pixels per root.
    std::vector<std::size_t> slot(parent.size(), kNone);
    std::vector<WhealRegion> regions;
    for (std::size_t i = 0; i < W * H; ++i) {
        if (label[i] == kNone) continue;
        const std::size_t root = find_root(parent, label[i]);
        if (slot[root] == kNone) {
            slot[root] = regions.size();
            regions.emplace_back();
        }
        regions[slot[root]].pixels.push_back(i);
    }
    for (auto& r : regions) {
        r.area_px = r.pixels.size();
        r.area_mm2 = double(r.area_px) * mm_per_px * mm_per_px;
        double sx = 0.0, sy = 0.0;
        r.x0 = W;
        r.y0 = H;
        for (std::size_t i : r.pixels) {
            const std::size_t x = i % W, y = i / W;
            sx += double(x) + 0.5;
            sy += double(y) + 0.5;
            r.x0 = std::min(r.x0, x);
            r.y0 = std::min(r.y0, y);
            r.x1 = std::max(r.x1, x + 1);
            r.y1 = std::max(r.y1, y + 1);
        }
        r.centroid = {sx / double(r.area_px), sy / double(r.area_px)};
    }
    std::stable_sort(regions.begin(), regions.end(),
                     [](const WhealRegion& a, const WhealRegion& b) { return a.area_px > b.area_px; });
    return regions;
}

std::vector<double> GridAxis::values() const {
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(min + double(i) * step);
    return out;
}

void GridSpec::validate() const {
    auto check = [](const GridAxis& a, const char* name) {
        if (!(a.step > 0.0)) throw ConfigError(std::string("grid ") + name + ": step must be positive");
        if (a.max < a.min) throw ConfigError(std::string("grid ") + name + ": max below min");
    };
    check(tx, "tx");
    check(ty, "ty");
    check(theta, "theta");
}

namespace {

std::array<Point, kPrickCount> transformed_pricks_mm(const PrickLayout& layout, const RigidTransform2D& t) {
    std::array<Point, kPrickCount> out{};
    for (std::size_t i = 0; i < kPrickCount; ++i) out[i] = t.apply(layout.points_mm[i]);
    return out;
}

std::vector<Point> centroids_mm(const std::vector<WhealRegion>& regions, const FitFrame& f) {
    std::vector<Point> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(px_to_mm(r.centroid, f.width, f.height, f.mm_per_px));
    return out;
}

double objective_mm(const std::array<Point, kPrickCount>& pricks, const std::vector<Point>& cents, double gate) {
    double total = 0.0;
    for (const auto& p : pricks) {
        double best = gate;
        for (const auto& c : cents) best = std::min(best, std::hypot(p.x - c.x, p.y - c.y));
        total += best;
    }
    return total;
}

bool smaller_magnitude(const RigidTransform2D& a, const RigidTransform2D& b) {
    const std::array<double, 3> ka{std::abs(a.tx_mm), std::abs(a.ty_mm), std::abs(a.theta_deg)};
    const std::array<double, 3> kb{std::abs(b.tx_mm), std::abs(b.ty_mm), std::abs(b.theta_deg)};
    return ka < kb;
}

}  // namespace

double transform_objective(const std::vector<WhealRegion>& regions, const PrickLayout& layout,
                           const RigidTransform2D& t, const FitFrame& frame, double gate_mm) {
    return objective_mm(transformed_pricks_mm(layout, t), centroids_mm(regions, frame), gate_mm);
}

RigidTransform2D fit_rigid_transform(const std::vector<WhealRegion>& regions, const PrickLayout& layout,
                                     const GridSpec& grid, const FitFrame& frame, double gate_mm,
                                     double* objective) {
    grid.validate();
    if (!(gate_mm > 0.0)) throw ConfigError("match gate must be positive");
    const auto cents = centroids_mm(regions, frame);
    if (regions.empty()) {
        if (objective) *objective = double(kPrickCount) * gate_mm;
        return {};
    }
    const auto txs = grid.tx.values();
    const auto tys = grid.ty.values();
    const auto ths = grid.theta.values();
    const std::size_t n = txs.size() * tys.size() * ths.size();
    std::vector<double> scores(n);

    // Each grid point is scored independently; the reduction below runs in
    // enumeration order, so the result does not depend on the thread count.
#pragma omp parallel for schedule(static)
    for (std::size_t idx = 0; idx < n; ++idx) {
        const std::size_t it = idx / (tys.size() * txs.size());
        const std::size_t iy = (idx / txs.size()) % tys.size();
        const std::size_t ix = idx % txs.size();
        const RigidTransform2D t{txs[ix], tys[iy], ths[it]};
        scores[idx] = objective_mm(transformed_pricks_mm(layout, t), cents, gate_mm);
    }

    constexpr double kTie = 1e-9;
    std::size_t best = 0;
    RigidTransform2D best_t{txs[0], tys[0], ths[0]};
    for (std::size_t idx = 1; idx < n; ++idx) {
        const RigidTransform2D t{txs[idx % txs.size()], tys[(idx / txs.size()) % tys.size()],
                                 ths[idx / (tys.size() * txs.size())]};
        const double d = scores[idx] - scores[best];
        if (d < -kTie || (std::abs(d) <= kTie && smaller_magnitude(t, best_t))) {
            best = idx;
            best_t = t;
        }
    }
    if (objective) *objective = scores[best];
    return best_t;
}

MatchResult greedy_match(const std::vector<WhealRegion>& regions, const PrickLayout& layout,
                         const RigidTransform2D& transform, const FitFrame& frame, double gate_mm) {
    MatchResult m;
    m.regions = regions;
    m.transform = transform;
    const auto pricks = transformed_pricks_mm(layout, transform);
    const auto cents = centroids_mm(regions, frame);
    m.objective = objective_mm(pricks, cents, gate_mm);

    std::vector<MatchPair> pairs;
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        for (std::size_t j = 0; j < cents.size(); ++j) {
            const double d = std::hypot(pricks[i].x - cents[j].x, pricks[i].y - cents[j].y);
            if (d < gate_mm) pairs.push_back({i, j, d});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const MatchPair& a, const MatchPair& b) {
        if (a.distance_mm != b.distance_mm) return a.distance_mm < b.distance_mm;
        if (a.prick != b.prick) return a.prick < b.prick;
        return a.region < b.region;
    });
    std::vector<bool> region_used(regions.size(), false);
    for (const auto& p : pairs) {
        if (m.prick_region[p.prick] || region_used[p.region]) continue;
        m.prick_region[p.prick] = p.region;
        region_used[p.region] = true;
        m.accepted.push_back(p);
    }
    for (std::size_t j = 0; j < regions.size(); ++j) {
        if (!region_used[j]) m.unmatched_regions.push_back(j);
    }
    return m;
}

void DetectConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
    if (!(gate_mm > 0.0)) throw ConfigError("gate_mm must be positive");
    grid.validate();
}

Detection detect_wheals(const FloatMap& map, double mm_per_px, const PrickLayout& layout, const DetectConfig& cfg) {
    cfg.validate();
    Detection d;
    d.mask = binarize(map, cfg.threshold);
    d.all_regions = connected_components(d.mask, cfg.connectivity, mm_per_px);
    std::vector<WhealRegion> candidates;
    for (const auto& r : d.all_regions) {
        if (r.area_px >= cfg.min_area_px) candidates.push_back(r);
    }
    const FitFrame frame{map.width, map.height, mm_per_px};
    double objective = 0.0;
    const auto t = fit_rigid_transform(candidates, layout, cfg.grid, frame, cfg.gate_mm, &objective);
    d.match = greedy_match(candidates, layout, t, frame, cfg.gate_mm);
    return d;
}

Polygon region_contour(const WhealRegion& region, std::size_t width) {
    if (region.pixels.empty()) return {};
    // Work in a local frame padded by one pixel.
    const std::size_t ox = region.x0, oy = region.y0;
    const std::size_t w = region.x1 - region.x0 + 2, h = region.y1 - region.y0 + 2;
    std::vector<std::uint8_t> in(w * h, 0);
    for (std::size_t i : region.pixels) in[(i / width - oy + 1) * w + (i % width - ox + 1)] = 1;
    auto fg = [&](std::size_t x, std::size_t y) { return in[y * w + x] != 0; };

    using V = std::pair<long, long>;
    std::multimap<V, V> out_edges;  // start -> end
    for (std::size_t y = 1; y + 1 < h; ++y) {
        for (std::size_t x = 1; x + 1 < w; ++x) {
            if (!fg(x, y)) continue;
            const long X = long(x), Y = long(y);
            if (!fg(x, y - 1)) out_edges.insert({{X, Y}, {X + 1, Y}});
            if (!fg(x + 1, y)) out_edges.insert({{X + 1, Y}, {X + 1, Y + 1}});
            if (!fg(x, y + 1)) out_edges.insert({{X + 1, Y + 1}, {X, Y + 1}});
            if (!fg(x - 1, y)) out_edges.insert({{X, Y + 1}, {X, Y}});
        }
    }

    std::vector<std::vector<V>> loops;
    while (!out_edges.empty()) {
        auto it = out_edges.begin();
        const V start = it->first;
        V cur = it->second;
        V dir{cur.first - start.first, cur.second - start.second};
        out_edges.erase(it);
        std::vector<V> loop{start};
        while (cur != start) {
            loop.push_back(cur);
            auto [lo, hi] = out_edges.equal_range(cur);
            if (lo == hi) throw InvariantError("region contour is not closed");
            // At pinch points prefer the rightmost turn so diagonal neighbours
            // stay on one boundary.
            auto pick = lo;
            long best_cross = 2;
            for (auto e = lo; e != hi; ++e) {
                const V d{e->second.first - cur.first, e->second.second - cur.second};
                const long cross = dir.first * d.second - dir.second * d.first;
                if (cross < best_cross) {
                    best_cross = cross;
                    pick = e;
                }
            }
            const V next = pick->second;
            dir = {next.first - cur.first, next.second - cur.second};
            out_edges.erase(pick);
            cur = next;
        }
        loops.push_back(std::move(loop));
    }

    auto area2 = [](const std::vector<V>& l) {
        long a = 0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            const V& p = l[i];
            const V& q = l[(i + 1) % l.size()];
            a += p.first * q.second - q.first * p.second;
        }
        return a;
    };
    std::size_t outer = 0;
    for (std::size_t i = 1; i < loops.size(); ++i) {
        if (area2(loops[i]) > area2(loops[outer])) outer = i;
    }
    const auto& loop = loops[outer];
    Polygon poly;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const V& prev = loop[(i + loop.size() - 1) % loop.size()];
        const V& p = loop[i];
        const V& next = loop[(i + 1) % loop.size()];
        const long cross = (p.first - prev.first) * (next.second - p.second) - (p.second - prev.second) * (next.first - p.first);
        if (cross == 0) continue;
        poly.push_back({double(p.first - 1 + long(ox)), double(p.second - 1 + long(oy))});
    }
    return poly;
}

double longest_diameter_mm(const WhealRegion& region, std::size_t width, double mm_per_px) {
    const Polygon c = region_contour(region, width);
    double best = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            best = std::max(best, std::hypot(c[i].x - c[j].x, c[i].y - c[j].y));
        }
    }
    return best * mm_per_px;
}

namespace {

json region_json(const WhealRegion& r, std::size_t width, double s) {
    json contour = json::array();
    for (const auto& p : region_contour(r, width)) contour.push_back({p.x, p.y});
    return {{"centroid_px", {r.centroid.x, r.centroid.y}},
            {"area_px", r.area_px},
            {"area_mm2", r.area_mm2},
            {"longest_diameter_mm", longest_diameter_mm(r, width, s)},
            {"bbox", {r.x0, r.y0, r.x1, r.y1}},
            {"contour", contour}};
}

}  // namespace

json match_to_json(const MatchResult& m, std::size_t width, double mm_per_px) {
    json pricks = json::array();
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        json e = {{"prick", i + 1}, {"matched", m.prick_region[i].has_value()}};
        if (m.prick_region[i]) {
            e.update(region_json(m.regions[*m.prick_region[i]], width, mm_per_px));
            for (const auto& a : m.accepted) {
                if (a.prick == i) e["distance_mm"] = a.distance_mm;
            }
        }
        pricks.push_back(e);
    }
    json unmatched = json::array();
    for (std::size_t j : m.unmatched_regions) unmatched.push_back(region_json(m.regions[j], width, mm_per_px));
    return {{"transform", {{"tx_mm", m.transform.tx_mm}, {"ty_mm", m.transform.ty_mm}, {"theta_deg", m.transform.theta_deg}}},
            {"objective_mm", m.objective},
            {"pricks", pricks},
            {"unmatched_regions", unmatched},
            {"contour_orientation", "positive shoelace area in pixel coordinates"}};
}

}  // namespace spat
