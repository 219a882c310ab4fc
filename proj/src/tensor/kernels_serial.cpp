#include <cmath>
#include <limits>

#include "resample.hpp"
#include "spat/tensor/kernels.hpp"

namespace spat::kernels::serial {

template <typename T>
void conv3x3_forward(const ConvGeom& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> output) {
    const auto H = static_cast<long>(g.height);
    const auto W = static_cast<long>(g.width);
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            for (long y = 0; y < H; ++y) {
                for (long x = 0; x < W; ++x) {
                    T acc = bias[co];
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                        const T* img = input.data() + (b * g.in_channels + ci) * g.plane();
                        const T* ker = weight.data() + (co * g.in_channels + ci) * 9;
                        for (long ky = 0; ky < 3; ++ky) {
                            const long sy = y + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (long kx = 0; kx < 3; ++kx) {
                                const long sx = x + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                acc += ker[ky * 3 + kx] * img[sy * W + sx];
                            }
                        }
                    }
                    output[(b * g.out_channels + co) * g.plane() + y * W + x] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward_input(const ConvGeom& g, std::span<const T> grad_out,
                            std::span<const T> weight, std::span<T> grad_in) {
    const auto H = static_cast<long>(g.height);
    const auto W = static_cast<long>(g.width);
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            const T* dout = grad_out.data() + (b * g.out_channels + co) * g.plane();
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                T* din = grad_in.data() + (b * g.in_channels + ci) * g.plane();
                const T* ker = weight.data() + (co * g.in_channels + ci) * 9;
                for (long y = 0; y < H; ++y) {
                    for (long x = 0; x < W; ++x) {
                        const T d = dout[y * W + x];
                        for (long ky = 0; ky < 3; ++ky) {
                            const long sy = y + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (long kx = 0; kx < 3; ++kx) {
                                const long sx = x + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                din[sy * W + sx] += ker[ky * 3 + kx] * d;
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward_params(const ConvGeom& g, std::span<const T> grad_out,
                             std::span<const T> input, std::span<T> grad_weight,
                             std::span<T> grad_bias) {
    const auto H = static_cast<long>(g.height);
    const auto W = static_cast<long>(g.width);
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            const T* dout = grad_out.data() + (b * g.out_channels + co) * g.plane();
            for (std::size_t p = 0; p < g.plane(); ++p) grad_bias[co] += dout[p];
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                const T* img = input.data() + (b * g.in_channels + ci) * g.plane();
                T* dker = grad_weight.data() + (co * g.in_channels + ci) * 9;
                for (long ky = 0; ky < 3; ++ky) {
                    for (long kx = 0; kx < 3; ++kx) {
                        T acc = 0;
                        for (long y = 0; y < H; ++y) {
                            const long sy = y + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (long x = 0; x < W; ++x) {
                                const long sx = x + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                acc += dout[y * W + x] * img[sy * W + sx];
                            }
                        }
                        dker[ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
}

template <typename T>
void group_norm_forward(const PlaneGeom& g, std::size_t groups, T eps, std::span<const T> input,
                        std::span<const T> gamma, std::span<const T> beta, std::span<T> output,
                        std::span<T> mean, std::span<T> rstd) {
    const std::size_t per_group = g.channels / groups;
    const std::size_t count = per_group * g.plane();
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t gr = 0; gr < groups; ++gr) {
            const std::size_t base = (b * g.channels + gr * per_group) * g.plane();
            double sum = 0.0;
            for (std::size_t i = 0; i < count; ++i) sum += input[base + i];
            const double mu = sum / static_cast<double>(count);
            double sq = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                const double d = input[base + i] - mu;
                sq += d * d;
            }
            const double var = sq / static_cast<double>(count);
            const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
            mean[b * groups + gr] = static_cast<T>(mu);
            rstd[b * groups + gr] = static_cast<T>(rs);
            for (std::size_t c = 0; c < per_group; ++c) {
                const std::size_t ch = gr * per_group + c;
                for (std::size_t p = 0; p < g.plane(); ++p) {
                    const std::size_t idx = base + c * g.plane() + p;
                    const T xhat = static_cast<T>((input[idx] - mu) * rs);
                    output[idx] = gamma[ch] * xhat + beta[ch];
                }
            }
        }
    }
}

template <typename T>
void group_norm_backward(const PlaneGeom& g, std::size_t groups, std::span<const T> input,
                         std::span<const T> gamma, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> grad_out,
                         std::span<T> grad_in, std::span<T> grad_gamma, std::span<T> grad_beta) {
    const std::size_t per_group = g.channels / groups;
    const double count = static_cast<double>(per_group * g.plane());
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t gr = 0; gr < groups; ++gr) {
            const double mu = mean[b * groups + gr];
            const double rs = rstd[b * groups + gr];
            const std::size_t base = (b * g.channels + gr * per_group) * g.plane();
            double s1 = 0.0;
            double s2 = 0.0;
            for (std::size_t c = 0; c < per_group; ++c) {
                const std::size_t ch = gr * per_group + c;
                double dg = 0.0;
                double db = 0.0;
                for (std::size_t p = 0; p < g.plane(); ++p) {
                    const std::size_t idx = base + c * g.plane() + p;
                    const double xhat = (input[idx] - mu) * rs;
                    const double dy = grad_out[idx];
                    dg += dy * xhat;
                    db += dy;
                    const double dxhat = dy * gamma[ch];
                    s1 += dxhat;
                    s2 += dxhat * xhat;
                }
                grad_gamma[ch] += static_cast<T>(dg);
                grad_beta[ch] += static_cast<T>(db);
            }
            for (std::size_t c = 0; c < per_group; ++c) {
                const std::size_t ch = gr * per_group + c;
                for (std::size_t p = 0; p < g.plane(); ++p) {
                    const std::size_t idx = base + c * g.plane() + p;
                    const double xhat = (input[idx] - mu) * rs;
                    const double dxhat = grad_out[idx] * static_cast<double>(gamma[ch]);
                    grad_in[idx] += static_cast<T>(rs * (dxhat - s1 / count - xhat * s2 / count));
                }
            }
        }
    }
}

template <typename T>
void maxpool2_forward(const PlaneGeom& g, std::span<const T> input, std::span<T> output,
                      std::span<std::size_t> argmax) {
    const std::size_t oh = g.height / 2;
    const std::size_t ow = g.width / 2;
    for (std::size_t bc = 0; bc < g.batch * g.channels; ++bc) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = bc * g.plane() + (2 * y + dy) * g.width + 2 * x + dx;
                        if (input[idx] > best) {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = bc * oh * ow + y * ow + x;
                output[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
}

template <typename T>
void maxpool2_backward(std::span<const T> grad_out, std::span<const std::size_t> argmax,
                       std::span<T> grad_in) {
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax[o]] += grad_out[o];
}

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                             std::span<const T> input, std::span<T> output) {
    const auto ty = detail::bilinear_taps(g.height, out_h);
    const auto tx = detail::bilinear_taps(g.width, out_w);
    for (std::size_t bc = 0; bc < g.batch * g.channels; ++bc) {
        const T* src = input.data() + bc * g.plane();
        T* dst = output.data() + bc * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& a = ty[y];
                const auto& b = tx[x];
                const double v = a.w0 * (b.w0 * src[a.i0 * g.width + b.i0] +
                                         b.w1 * src[a.i0 * g.width + b.i1]) +
                                 a.w1 * (b.w0 * src[a.i1 * g.width + b.i0] +
                                         b.w1 * src[a.i1 * g.width + b.i1]);
                dst[y * out_w + x] = static_cast<T>(v);
            }
        }
    }
}

template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                              std::span<const T> grad_out, std::span<T> grad_in) {
    const auto ty = detail::bilinear_taps(g.height, out_h);
    const auto tx = detail::bilinear_taps(g.width, out_w);
    for (std::size_t bc = 0; bc < g.batch * g.channels; ++bc) {
        const T* dout = grad_out.data() + bc * out_h * out_w;
        T* din = grad_in.data() + bc * g.plane();
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& a = ty[y];
                const auto& b = tx[x];
                const double d = dout[y * out_w + x];
                din[a.i0 * g.width + b.i0] += static_cast<T>(a.w0 * b.w0 * d);
                din[a.i0 * g.width + b.i1] += static_cast<T>(a.w0 * b.w1 * d);
                din[a.i1 * g.width + b.i0] += static_cast<T>(a.w1 * b.w0 * d);
                din[a.i1 * g.width + b.i1] += static_cast<T>(a.w1 * b.w1 * d);
            }
        }
    }
}

#define SPAT_INSTANTIATE_SERIAL(T)                                                              \
    template void conv3x3_forward<T>(const ConvGeom&, std::span<const T>, std::span<const T>,   \
                                     std::span<const T>, std::span<T>);                         \
    template void conv3x3_backward_input<T>(const ConvGeom&, std::span<const T>,                \
                                            std::span<const T>, std::span<T>);                  \
    template void conv3x3_backward_params<T>(const ConvGeom&, std::span<const T>,               \
                                             std::span<const T>, std::span<T>, std::span<T>);   \
    template void group_norm_forward<T>(const PlaneGeom&, std::size_t, T, std::span<const T>,   \
                                        std::span<const T>, std::span<const T>, std::span<T>,   \
                                        std::span<T>, std::span<T>);                            \
    template void group_norm_backward<T>(const PlaneGeom&, std::size_t, std::span<const T>,     \
                                         std::span<const T>, std::span<const T>,                \
                                         std::span<const T>, std::span<const T>, std::span<T>,  \
                                         std::span<T>, std::span<T>);                           \
    template void maxpool2_forward<T>(const PlaneGeom&, std::span<const T>, std::span<T>,       \
                                      std::span<std::size_t>);                                  \
    template void maxpool2_backward<T>(std::span<const T>, std::span<const std::size_t>,        \
                                       std::span<T>);                                           \
    template void resize_bilinear_forward<T>(const PlaneGeom&, std::size_t, std::size_t,        \
                                             std::span<const T>, std::span<T>);                 \
    template void resize_bilinear_backward<T>(const PlaneGeom&, std::size_t, std::size_t,       \
                                              std::span<const T>, std::span<T>);

SPAT_INSTANTIATE_SERIAL(float)
SPAT_INSTANTIATE_SERIAL(double)

}  // namespace spat::kernels::serial
