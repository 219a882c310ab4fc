#include "spat/saliency/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "spat/errors.hpp"
#include "spat/tensor/ops.hpp"

namespace spat {

using nlohmann::json;

template <typename T>
BasicTensor<T> input_gradients(const BasicUNet<T>& model, const BasicTensor<T>& input, const BasicTensor<T>& target) {
    if (model.config().in_images != kDirectionalImages) {
        throw ConfigError("saliency needs a model trained on the 32-image stack");
    }
    BasicTensor<T> x = input.detach();
    x.set_requires_grad(true);
    BasicTensor<T> loss = ops::bce_loss(model.forward(x), target);
    loss.backward();
    return BasicTensor<T>(x.shape(), std::vector<T>(x.grad().begin(), x.grad().end()));
}

template <typename T>
ImageScores image_scores(const BasicTensor<T>& g) {
    if (g.rank() != 4 || g.dim(1) != kDirectionalImages * 3) {
        throw ShapeError("saliency gradient must be [B, 96, H, W], got " + shape_string(g.shape()));
    }
    const std::size_t plane = g.dim(2) * g.dim(3);
    const std::size_t per_image = 3 * plane;
    const std::size_t sample = kDirectionalImages * per_image;
    const auto d = g.data();
    ImageScores s{};
    for (std::size_t b = 0; b < g.dim(0); ++b) {
        for (std::size_t k = 0; k < kDirectionalImages; ++k) {
            const std::size_t base = b * sample + k * per_image;
            double acc = 0.0;
            for (std::size_t i = 0; i < per_image; ++i) acc += double(d[base + i]) * double(d[base + i]);
            s[k] += acc;
        }
    }
    double total = 0.0;
    for (double v : s) total += v;
    if (!(total > 0.0)) throw InvariantError("saliency gradient is identically zero; scores are undefined");
    for (double& v : s) v /= total;
    return s;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DataError("quantile of an empty set");
    std::sort(v.begin(), v.end());
    const double pos = q * double(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double f = pos - double(lo);
    return v[lo] + f * (v[hi] - v[lo]);
}

std::array<ScoreSummary, kDirectionalImages> aggregate(const std::vector<CaseScores>& cases) {
    if (cases.empty()) throw DataError("cannot aggregate saliency over an empty case set");
    std::array<ScoreSummary, kDirectionalImages> out{};
    for (std::size_t k = 0; k < kDirectionalImages; ++k) {
        std::vector<double> v;
        for (const auto& c : cases) v.push_back(c.scores[k]);
        out[k] = {quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
    }
    return out;
}

std::string scores_csv(const std::vector<CaseScores>& cases) {
    std::ostringstream os;
    os << "case_id";
    for (std::size_t k = 1; k <= kDirectionalImages; ++k) os << ",img_" << k;
    os << ",fallback_target\n";
    char buf[32];
    for (const auto& c : cases) {
        os << c.case_id;
        for (double v : c.scores) {
            std::snprintf(buf, sizeof buf, ",%.9g", v);
            os << buf;
        }
        os << ',' << (c.fallback_target ? 1 : 0) << '\n';
    }
    return os.str();
}

json aggregate_json(const std::array<ScoreSummary, kDirectionalImages>& summary, std::size_t n_cases) {
    json images = json::array();
    for (std::size_t k = 0; k < kDirectionalImages; ++k) {
        const auto& s = summary[k];
        images.push_back({{"image", k + 1},
                          {"min", s.min},
                          {"q25", s.q25},
                          {"median", s.median},
                          {"q75", s.q75},
                          {"max", s.max}});
    }
    return {{"cases", n_cases}, {"quantile_rule", "linear interpolation at q*(n-1)"}, {"images", images}};
}

template Tensor input_gradients<float>(const UNet&, const Tensor&, const Tensor&);
template TensorD input_gradients<double>(const UNetD&, const TensorD&, const TensorD&);
template ImageScores image_scores<float>(const Tensor&);
template ImageScores image_scores<double>(const TensorD&);

}  // namespace spat
