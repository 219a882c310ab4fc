#include "spat/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spat/errors.hpp"
#include "spat/tensor/kernels.hpp"

namespace spat::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

// Allocates an op result and wires it into the graph when any input records.
template <typename T>
NodePtr<T> make_result(Shape shape, std::initializer_list<NodePtr<T>> inputs) {
    auto out = std::make_shared<detail::Node<T>>();
    out->data.assign(shape_numel(shape), T(0));
    out->shape = std::move(shape);
    if (NoGradGuard::recording()) {
        for (const auto& in : inputs) {
            if (in->requires_grad) out->requires_grad = true;
        }
        if (out->requires_grad) out->inputs.assign(inputs.begin(), inputs.end());
    }
    return out;
}

template <typename T>
void require_rank4(const BasicTensor<T>& t, const char* what) {
    if (t.rank() != 4) {
        throw ShapeError(std::string(what) + " expects a 4-D NCHW tensor, got " +
                         shape_string(t.shape()));
    }
}

template <typename T>
kernels::PlaneGeom plane_geom(const Shape& s) {
    return kernels::PlaneGeom{s[0], s[1], s[2], s[3]};
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
    require_rank4(input, "conv2d");
    const auto& s = input.shape();
    const auto& ws = weight.shape();
    if (ws.size() != 4 || ws[2] != 3 || ws[3] != 3) {
        throw ShapeError("conv2d weight must be [Cout,Cin,3,3], got " + shape_string(ws));
    }
    if (ws[1] != s[1]) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(s[1]) +
                         " channels, weight expects " + std::to_string(ws[1]));
    }
    if (bias.rank() != 1 || bias.dim(0) != ws[0]) {
        throw ShapeError("conv2d bias must be [" + std::to_string(ws[0]) + "], got " +
                         shape_string(bias.shape()));
    }
    const kernels::ConvGeom g{s[0], s[1], ws[0], s[2], s[3]};
    auto out = make_result<T>({s[0], ws[0], s[2], s[3]}, {input.node(), weight.node(), bias.node()});
    kernels::parallel::conv3x3_forward<T>(g, input.data(), weight.data(), bias.data(), out->data);
    if (out->requires_grad) {
        out->backward_fn = [g](detail::Node<T>& self) {
            auto& in = *self.inputs[0];
            auto& w = *self.inputs[1];
            auto& b = *self.inputs[2];
            kernels::parallel::conv3x3_backward<T>(
                g, self.grad, in.data, w.data, in.requires_grad ? std::span<T>(in.grad) : std::span<T>(),
                w.requires_grad ? std::span<T>(w.grad) : std::span<T>(),
                b.requires_grad ? std::span<T>(b.grad) : std::span<T>());
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& input, std::size_t num_groups,
                          const BasicTensor<T>& gamma, const BasicTensor<T>& beta, T eps) {
    require_rank4(input, "group_norm");
    const auto& s = input.shape();
    if (num_groups == 0 || s[1] % num_groups != 0) {
        throw ShapeError("group_norm: " + std::to_string(s[1]) + " channels not divisible into " +
                         std::to_string(num_groups) + " groups");
    }
    if (!(eps > T(0))) throw ConfigError("group_norm: eps must be positive");
    if (gamma.numel() != s[1] || beta.numel() != s[1]) {
        throw ShapeError("group_norm: gamma/beta must have one entry per channel");
    }
    const auto g = plane_geom<T>(s);
    auto out = make_result<T>(s, {input.node(), gamma.node(), beta.node()});
    auto stats = std::make_shared<std::vector<T>>(2 * s[0] * num_groups);
    std::span<T> mean(stats->data(), s[0] * num_groups);
    std::span<T> rstd(stats->data() + s[0] * num_groups, s[0] * num_groups);
    kernels::parallel::group_norm_forward<T>(g, num_groups, eps, input.data(), gamma.data(),
                                             beta.data(), out->data, mean, rstd);
    if (out->requires_grad) {
        out->backward_fn = [g, num_groups, stats](detail::Node<T>& self) {
            auto& in = *self.inputs[0];
            auto& ga = *self.inputs[1];
            auto& be = *self.inputs[2];
            const std::size_t n = g.batch * num_groups;
            kernels::parallel::group_norm_backward<T>(
                g, num_groups, in.data, ga.data, std::span<const T>(stats->data(), n),
                std::span<const T>(stats->data() + n, n), self.grad,
                in.requires_grad ? std::span<T>(in.grad) : std::span<T>(),
                ga.requires_grad ? std::span<T>(ga.grad) : std::span<T>(),
                be.requires_grad ? std::span<T>(be.grad) : std::span<T>());
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    auto out = make_result<T>(input.shape(), {input.node()});
    const auto x = input.data();
    const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out->data[i] = x[i] < T(0) ? T(0) : x[i];  // NaN passes through
    if (out->requires_grad) {
        out->backward_fn = [](detail::Node<T>& self) {
            auto& in = *self.inputs[0];
            const long m = static_cast<long>(self.data.size());
#pragma omp parallel for schedule(static)
            for (long i = 0; i < m; ++i) {
                if (self.data[i] > T(0)) in.grad[i] += self.grad[i];
            }
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
    auto out = make_result<T>(input.shape(), {input.node()});
    const auto x = input.data();
    const long n = static_cast<long>(x.size());
    // Saturated values are pulled back inside the open interval (0, 1).
    const T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        // Branch keeps exp() from overflowing for large |x|.
        const T v = x[i];
        T y;
        if (v >= T(0)) {
            y = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            y = e / (T(1) + e);
        }
        out->data[i] = std::clamp(y, lo, hi);
    }
    if (out->requires_grad) {
        out->backward_fn = [](detail::Node<T>& self) {
            auto& in = *self.inputs[0];
            const long m = static_cast<long>(self.data.size());
#pragma omp parallel for schedule(static)
            for (long i = 0; i < m; ++i) {
                const T y = self.data[i];
                in.grad[i] += self.grad[i] * y * (T(1) - y);
            }
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& input) {
    require_rank4(input, "maxpool2");
    const auto& s = input.shape();
    if (s[2] % 2 != 0 || s[3] % 2 != 0) {
        throw ShapeError("maxpool2 needs even H and W, got " + shape_string(s));
    }
    const auto g = plane_geom<T>(s);
    auto out = make_result<T>({s[0], s[1], s[2] / 2, s[3] / 2}, {input.node()});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out->data.size());
    kernels::parallel::maxpool2_forward<T>(g, input.data(), out->data, *argmax);
    if (out->requires_grad) {
        out->backward_fn = [g, argmax](detail::Node<T>& self) {
            kernels::parallel::maxpool2_backward<T>(g, self.grad, *argmax, self.inputs[0]->grad);
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w) {
    require_rank4(input, "resize_bilinear");
    const auto& s = input.shape();
    if (s[2] == 0 || s[3] == 0 || out_h == 0 || out_w == 0) {
        throw ShapeError("resize_bilinear needs non-empty planes");
    }
    const auto g = plane_geom<T>(s);
    auto out = make_result<T>({s[0], s[1], out_h, out_w}, {input.node()});
    kernels::parallel::resize_bilinear_forward<T>(g, out_h, out_w, input.data(), out->data);
    if (out->requires_grad) {
        out->backward_fn = [g, out_h, out_w](detail::Node<T>& self) {
            kernels::parallel::resize_bilinear_backward<T>(g, out_h, out_w, self.grad,
                                                           self.inputs[0]->grad);
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> upsample_bilinear2(const BasicTensor<T>& input) {
    require_rank4(input, "upsample_bilinear2");
    return resize_bilinear(input, input.dim(2) * 2, input.dim(3) * 2);
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs) {
    if (inputs.empty()) throw ShapeError("concat_channels needs at least one input");
    for (const auto& t : inputs) require_rank4(t, "concat_channels");
    const auto& s0 = inputs.front().shape();
    std::size_t channels = 0;
    for (const auto& t : inputs) {
        const auto& s = t.shape();
        if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
            throw ShapeError("concat_channels: " + shape_string(s) + " does not match " +
                             shape_string(s0) + " outside the channel axis");
        }
        channels += s[1];
    }
    const std::size_t batch = s0[0];
    const std::size_t plane = s0[2] * s0[3];

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {batch, channels, s0[2], s0[3]};
    out->data.resize(shape_numel(out->shape));
    bool needs_grad = false;
    if (NoGradGuard::recording()) {
        for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
    }
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& t : inputs) {
        offsets.push_back(offset);
        const std::size_t block = t.dim(1) * plane;
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(t.data().data() + b * block, block,
                        out->data.data() + (b * channels + offset) * plane);
        }
        offset += t.dim(1);
    }
    if (needs_grad) {
        out->requires_grad = true;
        for (const auto& t : inputs) out->inputs.push_back(t.node());
        out->backward_fn = [offsets, channels, plane, batch](detail::Node<T>& self) {
            for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                auto& in = *self.inputs[i];
                if (!in.requires_grad) continue;
                const std::size_t block = in.shape[1] * plane;
                for (std::size_t b = 0; b < batch; ++b) {
                    const T* src = self.grad.data() + (b * channels + offsets[i]) * plane;
                    T* dst = in.grad.data() + b * block;
                    for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
                }
            }
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("bce_loss: prediction " + shape_string(pred.shape()) +
                         " vs target " + shape_string(target.shape()));
    }
    if (pred.numel() == 0) throw ShapeError("bce_loss on an empty tensor");
    auto out = make_result<T>(Shape{}, {pred.node(), target.node()});
    const auto p = pred.data();
    const auto t = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(static_cast<double>(p[i]), kBceClamp, 1.0 - kBceClamp);
        total -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
    }
    out->data[0] = static_cast<T>(total / static_cast<double>(p.size()));
    if (out->requires_grad) {
        out->backward_fn = [](detail::Node<T>& self) {
            auto& pn = *self.inputs[0];
            auto& tn = *self.inputs[1];
            const double upstream = self.grad[0];
            const double inv_n = 1.0 / static_cast<double>(pn.data.size());
            if (pn.requires_grad) {
                const long n = static_cast<long>(pn.data.size());
#pragma omp parallel for schedule(static)
                for (long i = 0; i < n; ++i) {
                    const double q = std::clamp(static_cast<double>(pn.data[i]), kBceClamp, 1.0 - kBceClamp);
                    const double tv = tn.data[i];
                    pn.grad[i] += static_cast<T>(upstream * inv_n * (q - tv) / (q * (1.0 - q)));
                }
            }
            if (tn.requires_grad) {
                for (std::size_t i = 0; i < tn.data.size(); ++i) {
                    const double q = std::clamp(static_cast<double>(pn.data[i]), kBceClamp, 1.0 - kBceClamp);
                    tn.grad[i] += static_cast<T>(upstream * inv_n * (std::log(1.0 - q) - std::log(q)));
                }
            }
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
    auto out = make_result<T>(Shape{}, {input.node()});
    double total = 0.0;
    for (T v : input.data()) total += v;
    out->data[0] = static_cast<T>(total);
    if (out->requires_grad) {
        out->backward_fn = [](detail::Node<T>& self) {
            auto& in = *self.inputs[0];
            for (auto& g : in.grad) g += self.grad[0];
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor) {
    auto out = make_result<T>(input.shape(), {input.node()});
    const auto x = input.data();
    for (std::size_t i = 0; i < x.size(); ++i) out->data[i] = x[i] * factor;
    if (out->requires_grad) {
        out->backward_fn = [factor](detail::Node<T>& self) {
            auto& in = *self.inputs[0];
            for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[i] * factor;
        };
    }
    return BasicTensor<T>::from_node(out);
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    auto out = make_result<T>(a.shape(), {a.node(), b.node()});
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) out->data[i] = x[i] * y[i];
    if (out->requires_grad) {
        out->backward_fn = [](detail::Node<T>& self) {
            auto& an = *self.inputs[0];
            auto& bn = *self.inputs[1];
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (an.requires_grad) an.grad[i] += self.grad[i] * bn.data[i];
                if (bn.requires_grad) bn.grad[i] += self.grad[i] * an.data[i];
            }
        };
    }
    return BasicTensor<T>::from_node(out);
}

#define SPAT_INSTANTIATE_OPS(T)                                                                 \
    template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&);                                   \
    template BasicTensor<T> group_norm<T>(const BasicTensor<T>&, std::size_t,                   \
                                          const BasicTensor<T>&, const BasicTensor<T>&, T);     \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                     \
    template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                  \
    template BasicTensor<T> maxpool2<T>(const BasicTensor<T>&);                                 \
    template BasicTensor<T> upsample_bilinear2<T>(const BasicTensor<T>&);                       \
    template BasicTensor<T> resize_bilinear<T>(const BasicTensor<T>&, std::size_t, std::size_t); \
    template BasicTensor<T> concat_channels<T>(const std::vector<BasicTensor<T>>&);             \
    template BasicTensor<T> bce_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);          \
    template BasicTensor<T> sum<T>(const BasicTensor<T>&);                                      \
    template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                 \
    template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);

SPAT_INSTANTIATE_OPS(float)
SPAT_INSTANTIATE_OPS(double)

}  // namespace spat::ops
