#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spat/tensor/ops.hpp"
#include "spat/tensor/tensor.hpp"

namespace spat::testutil {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<T>(dist(rng));
    return BasicTensor<T>(std::move(shape), std::move(values), requires_grad);
}

inline double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// ||analytic - numeric|| / ||numeric|| for d(objective)/d(inputs[which]),
// using central differences with step h.
//
// `objective` must rebuild the graph from the given inputs on every call.
inline double gradient_rel_error(
    std::vector<TensorD> inputs, std::size_t which,
    const std::function<TensorD(const std::vector<TensorD>&)>& objective, double h = 1e-4) {
    for (auto& t : inputs) t.set_requires_grad(false);
    inputs[which].set_requires_grad(true);
    inputs[which].zero_grad();
    auto loss = objective(inputs);
    loss.backward();
    const auto g = inputs[which].grad();
    std::vector<double> analytic(g.begin(), g.end());

    std::vector<double> numeric(analytic.size());
    NoGradGuard no_grad;
    auto data = inputs[which].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double saved = data[i];
        data[i] = saved + h;
        const double up = objective(inputs).item();
        data[i] = saved - h;
        const double down = objective(inputs).item();
        data[i] = saved;
        numeric[i] = (up - down) / (2.0 * h);
    }
    std::vector<double> diff(analytic.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
    const double denom = std::max(l2(numeric), 1e-12);
    return l2(diff) / denom;
}

}  // namespace spat::testutil
