#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spat/tensor/tensor.hpp"

namespace spat {

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers, one per parameter, in parameter order.
template <typename T>
struct AdamState {
    AdamOptions options;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(std::span<const BasicTensor<T>> params, AdamOptions opts);
};

// One bias-corrected Adam update using each parameter's accumulated grad.
// Parameters without a grad buffer are treated as having zero gradient.
template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState<T>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace spat
