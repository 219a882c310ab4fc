#include "spat/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "spat/errors.hpp"

namespace spat {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr std::size_t kPolygonVertices = 64;
constexpr int kHarmonics = 4;  // orders 2..5

}  // namespace

void SynthConfig::validate() const {
    if (width == 0 || height == 0) throw ConfigError("synth: image dims must be positive");
    if (!(mm_per_px > 0.0)) throw ConfigError("synth: mm_per_px must be positive");
    if (presence_probability < 0.0 || presence_probability > 1.0) {
        throw ConfigError("synth: presence_probability must be in [0, 1]");
    }
    if (!(diameter_min_mm > 0.0) || diameter_max_mm < diameter_min_mm) {
        throw ConfigError("synth: need 0 < diameter_min_mm <= diameter_max_mm");
    }
    if (diameter_min_mm / mm_per_px < 1.0) {
        throw ConfigError("synth: minimum wheal diameter " + std::to_string(diameter_min_mm) +
                          " mm is below one pixel at " + std::to_string(mm_per_px) + " mm/px");
    }
    if (aspect_min <= 0.0 || aspect_min > 1.0) throw ConfigError("synth: aspect_min must be in (0, 1]");
    if (irregularity < 0.0 || irregularity * kHarmonics >= 0.5) {
        throw ConfigError("synth: irregularity must be in [0, 0.125)");
    }
    if (height_min_mm < 0.0 || height_max_mm < height_min_mm) throw ConfigError("synth: bad wheal height range");
    if (elevation_min_deg <= 0.0 || elevation_max_deg >= 90.0 || elevation_max_deg < elevation_min_deg) {
        throw ConfigError("synth: elevations must satisfy 0 < min <= max < 90");
    }
    if (max_tx_mm < 0.0 || max_ty_mm < 0.0 || max_theta_deg < 0.0) throw ConfigError("synth: negative transform bound");
    if (transform_step_mm < 0.0 || transform_step_deg < 0.0) throw ConfigError("synth: negative transform step");
    if (sites.empty()) throw ConfigError("synth: site list is empty");
}

void to_json(json& j, const SynthConfig& c) {
    j = json{{"width", c.width},
             {"height", c.height},
             {"mm_per_px", c.mm_per_px},
             {"layout_spacing_x_mm", c.layout_spacing_x_mm},
             {"layout_spacing_y_mm", c.layout_spacing_y_mm},
             {"presence_probability", c.presence_probability},
             {"diameter_min_mm", c.diameter_min_mm},
             {"diameter_max_mm", c.diameter_max_mm},
             {"aspect_min", c.aspect_min},
             {"irregularity", c.irregularity},
             {"neighbour_margin_mm", c.neighbour_margin_mm},
             {"centre_jitter_mm", c.centre_jitter_mm},
             {"height_min_mm", c.height_min_mm},
             {"height_max_mm", c.height_max_mm},
             {"max_tx_mm", c.max_tx_mm},
             {"max_ty_mm", c.max_ty_mm},
             {"max_theta_deg", c.max_theta_deg},
             {"transform_step_mm", c.transform_step_mm},
             {"transform_step_deg", c.transform_step_deg},
             {"elevation_min_deg", c.elevation_min_deg},
             {"elevation_max_deg", c.elevation_max_deg},
             {"azimuth_offset_deg", c.azimuth_offset_deg},
             {"ambient", c.ambient},
             {"exposure", c.exposure},
             {"shadow_strength", c.shadow_strength},
             {"full_light_uniform", c.full_light_uniform},
             {"wheal_albedo_gain", c.wheal_albedo_gain},
             {"flare_strength", c.flare_strength},
             {"texture_strength", c.texture_strength},
             {"grain_sigma", c.grain_sigma},
             {"noise_sigma", c.noise_sigma},
             {"sites", c.sites},
             {"site", c.site}};
}

void from_json(const json& j, SynthConfig& c) {
    if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
    json defaults;
    to_json(defaults, c);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) throw ConfigError("synth config: unknown member '" + it.key() + "'");
    }
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("synth config: bad value for '") + key + "': " + e.what());
        }
    };
    get("width", c.width);
    get("height", c.height);
    get("mm_per_px", c.mm_per_px);
    get("layout_spacing_x_mm", c.layout_spacing_x_mm);
    get("layout_spacing_y_mm", c.layout_spacing_y_mm);
    get("presence_probability", c.presence_probability);
    get("diameter_min_mm", c.diameter_min_mm);
    get("diameter_max_mm", c.diameter_max_mm);
    get("aspect_min", c.aspect_min);
    get("irregularity", c.irregularity);
    get("neighbour_margin_mm", c.neighbour_margin_mm);
    get("centre_jitter_mm", c.centre_jitter_mm);
    get("height_min_mm", c.height_min_mm);
    get("height_max_mm", c.height_max_mm);
    get("max_tx_mm", c.max_tx_mm);
    get("max_ty_mm", c.max_ty_mm);
    get("max_theta_deg", c.max_theta_deg);
    get("transform_step_mm", c.transform_step_mm);
    get("transform_step_deg", c.transform_step_deg);
    get("elevation_min_deg", c.elevation_min_deg);
    get("elevation_max_deg", c.elevation_max_deg);
    get("azimuth_offset_deg", c.azimuth_offset_deg);
    get("ambient", c.ambient);
    get("exposure", c.exposure);
    get("shadow_strength", c.shadow_strength);
    get("full_light_uniform", c.full_light_uniform);
    get("wheal_albedo_gain", c.wheal_albedo_gain);
    get("flare_strength", c.flare_strength);
    get("texture_strength", c.texture_strength);
    get("grain_sigma", c.grain_sigma);
    get("noise_sigma", c.noise_sigma);
    get("sites", c.sites);
    get("site", c.site);
}

std::array<LightDirection, kDirectionalImages> light_directions(const SynthConfig& c) {
    std::array<LightDirection, kDirectionalImages> out{};
    for (std::size_t k = 1; k <= kDirectionalImages; ++k) {
        const bool first_bank = k <= 16;
        const std::size_t j = first_bank ? k - 1 : kDirectionalImages - k;  // 0..15, mirrored pairs share j
        const double elevation = c.elevation_min_deg + (c.elevation_max_deg - c.elevation_min_deg) * double(j) / 15.0;
        const double offset = (j % 2 == 0 ? -1.0 : 1.0) * c.azimuth_offset_deg;
        const double azimuth = first_bank ? -90.0 + offset : 90.0 - offset;
        out[k - 1] = {azimuth, elevation};
    }
    return out;
}

std::uint64_t case_seed(std::uint64_t seed, std::size_t index) {
    // splitmix64 over (seed, index)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

struct Wheal {
    std::size_t prick = 0;
    Point centre;          // px
    double a = 0, b = 0;   // semi-axes, px
    double psi = 0;        // ellipse orientation
    std::array<double, kHarmonics> amp{};
    std::array<double, kHarmonics> phase{};
    double height_mm = 0;
    double diameter_mm = 0;
    double flare_scale = 0;  // flare radius over the mean wheal radius

    double radius(double phi) const {
        const double c = std::cos(phi - psi) / a;
        const double s = std::sin(phi - psi) / b;
        double r = 1.0 / std::sqrt(c * c + s * s);
        double pert = 1.0;
        for (int k = 0; k < kHarmonics; ++k) pert += amp[k] * std::cos((k + 2) * phi + phase[k]);
        return r * pert;
    }
    double max_radius() const {
        double m = 0.0;
        for (int k = 0; k < kHarmonics; ++k) m += std::abs(amp[k]);
        return std::max(a, b) * (1.0 + m);
    }
    // Normalized radial coordinate of a point: < 1 inside the boundary.
    double rho(double x, double y) const {
        const double dx = x - centre.x;
        const double dy = y - centre.y;
        const double d = std::hypot(dx, dy);
        if (d == 0.0) return 0.0;
        return d / radius(std::atan2(dy, dx));
    }
};

// Smooth value noise: random lattice values, smoothstep-interpolated.
class ValueNoise {
public:
    ValueNoise(std::size_t w, std::size_t h, double cell, std::mt19937_64& rng) : cell_(cell) {
        nx_ = static_cast<std::size_t>(std::ceil(double(w) / cell)) + 2;
        ny_ = static_cast<std::size_t>(std::ceil(double(h) / cell)) + 2;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        lattice_.resize(nx_ * ny_);
        for (auto& v : lattice_) v = u(rng);
    }
    double operator()(double x, double y) const {
        const double fx = x / cell_;
        const double fy = y / cell_;
        const auto ix = static_cast<std::size_t>(fx);
        const auto iy = static_cast<std::size_t>(fy);
        const double tx = smooth(fx - double(ix));
        const double ty = smooth(fy - double(iy));
        auto at = [&](std::size_t i, std::size_t j) { return lattice_[j * nx_ + i]; };
        const double top = at(ix, iy) * (1 - tx) + at(ix + 1, iy) * tx;
        const double bot = at(ix, iy + 1) * (1 - tx) + at(ix + 1, iy + 1) * tx;
        return top * (1 - ty) + bot * ty;
    }

private:
    static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
    double cell_;
    std::size_t nx_ = 0, ny_ = 0;
    std::vector<double> lattice_;
};

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

SynthCase generate_case(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const std::size_t W = cfg.width;
    const std::size_t H = cfg.height;
    const double s = cfg.mm_per_px;

    SynthCase out;
    auto snap = [](double v, double bound, double step) {
        if (step <= 0.0) return v;
        const double lim = std::floor(bound / step) * step;
        return std::clamp(std::round(v / step) * step, -lim, lim);
    };
    out.transform = {snap(uniform(-cfg.max_tx_mm, cfg.max_tx_mm), cfg.max_tx_mm, cfg.transform_step_mm),
                     snap(uniform(-cfg.max_ty_mm, cfg.max_ty_mm), cfg.max_ty_mm, cfg.transform_step_mm),
                     snap(uniform(-cfg.max_theta_deg, cfg.max_theta_deg), cfg.max_theta_deg, cfg.transform_step_deg)};
    const PrickLayout layout = PrickLayout::grid(cfg.layout_spacing_x_mm, cfg.layout_spacing_y_mm);

    // Draw every prick's parameters whether present or not, so the stream
    // layout does not depend on presence outcomes.
    std::vector<Wheal> wheals;
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        const bool present = unit(rng) < cfg.presence_probability;
        Wheal w;
        w.prick = i;
        Point c_mm = out.transform.apply(layout.points_mm[i]);
        const double jr = cfg.centre_jitter_mm * std::sqrt(unit(rng));
        const double ja = uniform(0.0, 2.0 * kPi);
        c_mm.x += jr * std::cos(ja);
        c_mm.y += jr * std::sin(ja);
        w.centre = mm_to_px(c_mm, W, H, s);
        w.diameter_mm = uniform(cfg.diameter_min_mm, cfg.diameter_max_mm);
        const double q = uniform(cfg.aspect_min, 1.0);
        w.psi = uniform(0.0, kPi);
        for (int k = 0; k < kHarmonics; ++k) {
            w.amp[k] = cfg.irregularity * uniform(-1.0, 1.0);
            w.phase[k] = uniform(0.0, 2.0 * kPi);
        }
        w.height_mm = uniform(cfg.height_min_mm, cfg.height_max_mm);
        w.flare_scale = uniform(1.6, 2.6);
        const double r_px = w.diameter_mm / 2.0 / s;
        w.a = r_px / std::sqrt(q);
        w.b = r_px * std::sqrt(q);
        if (present) wheals.push_back(w);
    }

    // Shrink neighbouring pairs until no two boundaries can touch.
    const double margin_px = cfg.neighbour_margin_mm / s;
    for (std::size_t i = 0; i < wheals.size(); ++i) {
        for (std::size_t j = i + 1; j < wheals.size(); ++j) {
            auto& wi = wheals[i];
            auto& wj = wheals[j];
            const double d = std::hypot(wi.centre.x - wj.centre.x, wi.centre.y - wj.centre.y);
            const double need = wi.max_radius() + wj.max_radius() + margin_px;
            if (need > d) {
                const double f = std::max(d - margin_px, 0.0) / (wi.max_radius() + wj.max_radius());
                for (Wheal* w : {&wi, &wj}) {
                    w->a *= f;
                    w->b *= f;
                    w->diameter_mm *= f;
                }
            }
        }
    }
    for (const auto& w : wheals) {
        if (w.diameter_mm / s < 1.0) throw ConfigError("synth: wheal diameter fell below one pixel; widen the layout spacing");
    }

    // Height field (mm) and per-wheal radial coordinate at pixel centres.
    std::vector<double> hgt(W * H, 0.0);
    std::vector<double> rho(W * H, 1e9);
    std::vector<double> flare(W * H, 0.0);
    for (const auto& w : wheals) {
        const double flare_px = w.flare_scale * 0.5 * (w.a + w.b);
        const double reach = std::max(w.max_radius() * 2.0, 2.5 * flare_px) + 2.0;
        const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(w.centre.x - reach)));
        const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(w.centre.y - reach)));
        const auto x1 = static_cast<std::size_t>(std::clamp(std::ceil(w.centre.x + reach), 0.0, double(W)));
        const auto y1 = static_cast<std::size_t>(std::clamp(std::ceil(w.centre.y + reach), 0.0, double(H)));
        for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
                const double r = w.rho(double(x) + 0.5, double(y) + 0.5);
                const std::size_t i = y * W + x;
                rho[i] = std::min(rho[i], r);
                const double d = std::hypot(double(x) + 0.5 - w.centre.x, double(y) + 0.5 - w.centre.y) / flare_px;
                flare[i] = std::max(flare[i], std::exp(-d * d));
                if (r < 1.0) hgt[i] += w.height_mm * std::pow(1.0 - r * r, 0.4);
            }
        }
    }
    double hmax = 0.0;
    for (double v : hgt) hmax = std::max(hmax, v);

    // Albedo: skin tone, low-frequency mottling, fine grain, a diffuse
    // erythema flare centred on each wheal and a faint pallor on the wheal.
    const std::array<double, 3> tone = {uniform(0.82, 0.95), uniform(0.60, 0.72), uniform(0.50, 0.62)};
    ValueNoise coarse(W, H, 24.0, rng);
    ValueNoise fine(W, H, 7.0, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::array<double, 3>> albedo(W * H);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const std::size_t i = y * W + x;
            const double tex = 1.0 + cfg.texture_strength * (0.7 * coarse(double(x), double(y)) + 0.3 * fine(double(x), double(y))) +
                               cfg.grain_sigma * gauss(rng);
            const double r = rho[i];
            const double red = cfg.flare_strength * flare[i];
            const double pale = r < 1.0 ? cfg.wheal_albedo_gain * (1.0 - r * r) : 0.0;
            albedo[i] = {tone[0] * tex * (1.0 + pale), tone[1] * tex * (1.0 + pale - red),
                         tone[2] * tex * (1.0 + pale - red)};
        }
    }

    // Surface normals from central differences (mm / mm).
    std::vector<std::array<double, 3>> normal(W * H);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < W ? x + 1 : x;
            const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < H ? y + 1 : y;
            const double hx = (hgt[y * W + xr] - hgt[y * W + xl]) / (double(xr - xl) * s);
            const double hy = (hgt[yd * W + x] - hgt[yu * W + x]) / (double(yd - yu) * s);
            const double n = std::sqrt(hx * hx + hy * hy + 1.0);
            normal[y * W + x] = {-hx / n, -hy / n, 1.0 / n};
        }
    }

    auto sample_height = [&](double x, double y) {
        if (x < 0.0 || y < 0.0 || x >= double(W) || y >= double(H)) return 0.0;
        return hgt[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
    };

    const auto lights = light_directions(cfg);
    std::array<std::vector<double>, kDirectionalImages> shade;
    for (std::size_t k = 0; k < kDirectionalImages; ++k) {
        const double az = deg2rad(lights[k].azimuth_deg);
        const double el = deg2rad(lights[k].elevation_deg);
        const double lx = std::cos(el) * std::cos(az), ly = std::cos(el) * std::sin(az), lz = std::sin(el);
        const double rise = std::tan(el) * s;  // ray height gain (mm) per pixel travelled
        auto& sh = shade[k];
        sh.resize(W * H);
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t i = y * W + x;
                const auto& n = normal[i];
                double lit = std::min(std::max(0.0, n[0] * lx + n[1] * ly + n[2] * lz) / lz, 2.0);
                if (hmax > 0.0) {
                    const double h0 = hgt[i];
                    const double px = double(x) + 0.5, py = double(y) + 0.5;
                    for (double t = 0.75; h0 + t * rise <= hmax; t += 0.5) {
                        if (sample_height(px + t * std::cos(az), py + t * std::sin(az)) > h0 + t * rise) {
                            lit *= 1.0 - cfg.shadow_strength;
                            break;
                        }
                    }
                }
                sh[i] = cfg.ambient + (1.0 - cfg.ambient) * lit;
            }
        }
    }

    Case& c = out.data;
    ImageStack& st = c.stack;
    st.case_id = "case";
    st.site = cfg.site;
    st.mm_per_px = s;
    st.width = W;
    st.height = H;
    for (std::size_t k = 0; k < kDirectionalImages; ++k) {
        Image8 img(W, H);
        for (std::size_t i = 0; i < W * H; ++i) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                img.rgb[i * 3 + ch] = quantize(albedo[i][ch] * cfg.exposure * shade[k][i] + cfg.noise_sigma * gauss(rng));
            }
        }
        st.directional[k] = std::move(img);
    }
    {
        Image8 img(W, H);
        for (std::size_t i = 0; i < W * H; ++i) {
            double mean = 0.0;
            for (std::size_t k = 13; k < 19; ++k) mean += shade[k][i];
            mean /= 6.0;
            const double lit = cfg.full_light_uniform + (1.0 - cfg.full_light_uniform) * mean;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                img.rgb[i * 3 + ch] = quantize(albedo[i][ch] * cfg.exposure * lit + cfg.noise_sigma * gauss(rng));
            }
        }
        st.full_light = std::move(img);
    }

    c.annotations.layout = layout;
    json truth_wheals = json::array();
    for (const auto& w : wheals) {
        Polygon poly;
        for (std::size_t v = 0; v < kPolygonVertices; ++v) {
            const double phi = 2.0 * kPi * double(v) / double(kPolygonVertices);
            const double r = w.radius(phi);
            poly.push_back({w.centre.x + r * std::cos(phi), w.centre.y + r * std::sin(phi)});
        }
        poly = clip_to_rect(poly, double(W), double(H));
        if (poly.size() < 3) continue;
        WhealTruth t{w.centre, w.diameter_mm, w.height_mm, polygon_area(poly) * s * s};
        truth_wheals.push_back({{"prick", w.prick + 1},
                                {"centre_px", {t.centre_px.x, t.centre_px.y}},
                                {"diameter_mm", t.diameter_mm},
                                {"height_mm", t.height_mm},
                                {"area_mm2", t.area_mm2}});
        out.wheals[w.prick] = t;
        c.annotations.polygons[w.prick] = std::move(poly);
    }
    c.extra["synthetic"] = {{"seed", seed},
                            {"transform",
                             {{"tx_mm", out.transform.tx_mm},
                              {"ty_mm", out.transform.ty_mm},
                              {"theta_deg", out.transform.theta_deg}}},
                            {"wheals", truth_wheals}};
    return out;
}

DatasetIndex generate_corpus(const SynthConfig& config, std::size_t n_cases, std::uint64_t seed,
                             const std::filesystem::path& out) {
    config.validate();
    if (n_cases == 0) throw ConfigError("synth: number of cases must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec || !std::filesystem::is_directory(out)) {
        throw DataError("cannot create dataset directory " + out.string());
    }
    DatasetIndex index;
    index.root = out;
    json gen;
    to_json(gen, config);
    gen.erase("site");
    index.generator = {{"config", gen}, {"seed", seed}, {"n_cases", n_cases}};
    for (std::size_t i = 0; i < n_cases; ++i) {
        SynthConfig cfg = config;
        cfg.site = config.sites[i % config.sites.size()];
        SynthCase sc = generate_case(cfg, case_seed(seed, i));
        char name[32];
        std::snprintf(name, sizeof name, "case_%04zu", i);
        sc.data.stack.case_id = name;
        save_case(sc.data, out / name);
        index.cases.push_back({name, cfg.site, name, case_digest(out / name)});
    }
    write_dataset_manifest(index);
    return index;
}

}  // namespace spat
