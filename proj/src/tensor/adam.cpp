#include "spat/tensor/adam.hpp"

#include <cmath>

#include "spat/errors.hpp"

namespace spat {

template <typename T>
AdamState<T>::AdamState(std::span<const BasicTensor<T>> params, AdamOptions opts) : options(opts) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.emplace_back(p.numel(), T(0));
        v.emplace_back(p.numel(), T(0));
    }
}

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState<T>& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
            throw ShapeError("adam_step: state shape mismatch for parameter " + std::to_string(i));
        }
    }
    const auto& o = state.options;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(o.beta1, t);
    const double bc2 = 1.0 - std::pow(o.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.has_grad()) continue;
        auto data = p.data();
        const auto grad = p.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const long n = static_cast<long>(data.size());
#pragma omp parallel for schedule(static)
        for (long k = 0; k < n; ++k) {
            const double g = grad[k];
            const double mk = o.beta1 * m[k] + (1.0 - o.beta1) * g;
            const double vk = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double mhat = mk / bc1;
            const double vhat = vk / bc2;
            data[k] = static_cast<T>(data[k] - o.lr * mhat / (std::sqrt(vhat) + o.eps));
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<BasicTensor<float>>, AdamState<float>&);
template void adam_step<double>(std::span<BasicTensor<double>>, AdamState<double>&);

}  // namespace spat
