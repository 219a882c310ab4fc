#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spat/data/dataset.hpp"

namespace spat {

struct SynthConfig {
    std::size_t width = 192;
    std::size_t height = 128;
    double mm_per_px = 0.25;

    double layout_spacing_x_mm = 10.0;
    double layout_spacing_y_mm = 9.0;

    double presence_probability = 0.75;
    double diameter_min_mm = 3.0;
    double diameter_max_mm = 10.0;
    double aspect_min = 0.8;          // minor/major axis ratio
    double irregularity = 0.05;       // amplitude of each boundary harmonic (orders 2..5)
    double neighbour_margin_mm = 0.6;
    double centre_jitter_mm = 0.2;
    double height_min_mm = 0.5;
    double height_max_mm = 1.0;

    double max_tx_mm = 2.5;
    double max_ty_mm = 2.5;
    double max_theta_deg = 3.0;
    // Planted transforms are rounded to these steps (the detector's default
    // grid); 0 leaves them continuous.
    double transform_step_mm = 0.5;
    double transform_step_deg = 0.5;

    // Light k in 1..16 comes from -y, k in 17..32 mirrors light 33-k from +y.
    // Elevation rises from elevation_min_deg (lights 1, 32) to
    // elevation_max_deg (lights 16, 17); azimuth alternates +-azimuth_offset_deg.
    double elevation_min_deg = 12.0;
    double elevation_max_deg = 65.0;
    double azimuth_offset_deg = 20.0;
    double ambient = 0.25;
    double exposure = 0.55;
    double shadow_strength = 0.7;

    // The full-light image mixes a uniform term with the mean of lights 14..19.
    double full_light_uniform = 0.95;
    double wheal_albedo_gain = 0.015;
    double flare_strength = 0.05;

    double texture_strength = 0.08;
    double grain_sigma = 0.015;
    double noise_sigma = 0.01;

    std::vector<std::string> sites = {"site_a", "site_b", "site_c", "site_d"};
    std::string site = "site_a";  // used by generate_case; corpora assign sites round-robin

    // Throws ConfigError.
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
// Missing members keep their defaults; unknown members throw ConfigError.
void from_json(const nlohmann::json& j, SynthConfig& c);

struct LightDirection {
    double azimuth_deg;    // direction towards the light in the image plane, 0 = +x, 90 = +y
    double elevation_deg;
};

std::array<LightDirection, kDirectionalImages> light_directions(const SynthConfig& config);

struct WhealTruth {
    Point centre_px;
    double diameter_mm = 0.0;   // equal-area diameter before boundary perturbation
    double height_mm = 0.0;
    double area_mm2 = 0.0;      // area of the (clipped) ground-truth polygon
};

struct SynthCase {
    Case data;
    RigidTransform2D transform;
    std::array<std::optional<WhealTruth>, kPrickCount> wheals;
};

SynthCase generate_case(const SynthConfig& config, std::uint64_t seed);

// Seed of case `index` within a corpus generated from `seed`.
std::uint64_t case_seed(std::uint64_t seed, std::size_t index);

// Writes n cases plus the dataset manifest under `out` and returns the index.
// Case i uses case_seed(seed, i) and site config.sites[i % sites.size()].
DatasetIndex generate_corpus(const SynthConfig& config, std::size_t n_cases, std::uint64_t seed,
                             const std::filesystem::path& out);

}  // namespace spat
