#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spat/data/dataset.hpp"
#include "spat/model/unet.hpp"
#include "spat/tensor/tensor.hpp"

namespace spat {

struct TrainConfig {
    std::size_t epochs = 64;
    std::size_t batch_size = 4;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t target_width = 192;   // 768 x 512 is the full-scale setting
    std::size_t target_height = 128;
    InputMode mode = InputMode::spat32;
    std::uint64_t seed = 0;
    double train_ratio = 0.75;
    std::size_t hidden_features = 64;
    std::size_t depth = 3;
    std::size_t norm_groups = 8;

    UNetConfig unet_config() const;
    // Throws ConfigError.
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing members keep defaults; unknown members throw ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Preprocessed {
    Tensor input;               // [1, C, target_h, target_w], values in [0, 1]
    double mm_per_px_x = 0.0;   // effective scale after resizing
    double mm_per_px_y = 0.0;
};

// Bilinear resize of every image to the target size after dividing 8-bit
// values by 255. Throws DataError when stack images disagree in size.
Preprocessed preprocess(const ImageStack& stack, InputMode mode, std::size_t target_w, std::size_t target_h);

// Nearest-neighbour resize of a binary mask into a [1, 1, h, w] tensor of 0/1.
Tensor resize_mask_nearest(const BinaryMask& mask, std::size_t target_w, std::size_t target_h);

// Bilinear resize of a [H, W] map.
FloatMap resize_map(const FloatMap& map, std::size_t target_w, std::size_t target_h);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

// Per site, a seeded shuffle followed by taking round(n_site * ratio) cases
// for training. Both lists come back in ascending index order.
Split stratified_split(const std::vector<std::string>& sites, double train_ratio, std::uint64_t seed);

struct Sample {
    std::string case_id;
    Tensor input;   // [1, C, H, W]
    Tensor target;  // [1, 1, H, W]
};

Sample make_sample(const Case& c, const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;   // 1-based
    double loss = 0.0;       // sample-weighted mean training loss
    double val_dice = 0.0;   // pooled Dice at target resolution; NaN without validation cases
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

nlohmann::json epoch_json(const EpochRecord& r);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Returns the final-epoch model. Deterministic given config.seed.
UNet train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& config,
           TrainHistory& history, const EpochCallback& on_epoch = {});

// Pooled Dice of thresholded predictions against the targets.
double validation_dice(const UNet& model, const std::vector<Sample>& samples, double threshold = 0.5);

// Forward at the configured target size, bilinear back to the stack size.
FloatMap predict(const UNet& model, InputMode mode, const ImageStack& stack);
FloatMap predict_tensor(const UNet& model, const Tensor& input, std::size_t out_w, std::size_t out_h);

struct TrainedModel {
    UNet model;
    TrainConfig config;
};

// <dir>/model.spatw holds the parameters, <dir>/model.json the TrainConfig.
void save_model(const std::filesystem::path& dir, const UNet& model, const TrainConfig& config);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace spat
