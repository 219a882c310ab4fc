#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "spat/data/dataset.hpp"
#include "spat/model/unet.hpp"

namespace spat {

// d BCE(forward(input), target) / d input, same shape as input. The model
// must take the 32-image stack (ConfigError otherwise). `target` is
// [B, 1, H, W] with 0/1 values.
template <typename T>
BasicTensor<T> input_gradients(const BasicUNet<T>& model, const BasicTensor<T>& input, const BasicTensor<T>& target);

using ImageScores = std::array<double, kDirectionalImages>;

// score_k = sum of squared gradients over image k's 3 channels, divided by
// the total over all 32 images. An all-zero gradient throws InvariantError.
template <typename T>
ImageScores image_scores(const BasicTensor<T>& gradient);

struct CaseScores {
    std::string case_id;
    ImageScores scores{};
    bool fallback_target = false;  // target was the model's own thresholded prediction
};

struct ScoreSummary {
    double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

// Quantile q of sorted values: linear interpolation at position q * (n - 1).
double quantile(std::vector<double> values, double q);

// Five-number summary per image index. Throws DataError for an empty set.
std::array<ScoreSummary, kDirectionalImages> aggregate(const std::vector<CaseScores>& cases);

std::string scores_csv(const std::vector<CaseScores>& cases);
nlohmann::json aggregate_json(const std::array<ScoreSummary, kDirectionalImages>& summary, std::size_t n_cases);

extern template Tensor input_gradients<float>(const UNet&, const Tensor&, const Tensor&);
extern template TensorD input_gradients<double>(const UNetD&, const TensorD&, const TensorD&);
extern template ImageScores image_scores<float>(const Tensor&);
extern template ImageScores image_scores<double>(const TensorD&);

}  // namespace spat
