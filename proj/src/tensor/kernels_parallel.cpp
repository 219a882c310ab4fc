#include <cmath>
#include <limits>
#include <vector>

#include "resample.hpp"
#include "spat/tensor/kernels.hpp"

namespace spat::kernels::parallel {

template <typename T>
void im2col3x3(std::size_t channels, std::size_t height, std::size_t width, const T* image,
               T* col) {
    const auto H = static_cast<long>(height);
    const auto W = static_cast<long>(width);
    const std::size_t plane = height * width;
#pragma omp parallel for schedule(static)
    for (long ci = 0; ci < static_cast<long>(channels); ++ci) {
        const T* src = image + ci * plane;
        for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
                T* row = col + (ci * 9 + ky * 3 + kx) * plane;
                for (long y = 0; y < H; ++y) {
                    const long sy = y + ky - 1;
                    T* out = row + y * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(out, out + W, T(0));
                        continue;
                    }
                    const T* in = src + sy * W;
                    // Interior columns map to a shifted contiguous run.
                    const long x_lo = kx == 0 ? 1 : 0;
                    const long x_hi = kx == 2 ? W - 1 : W;
                    if (kx == 0) out[0] = T(0);
                    if (kx == 2) out[W - 1] = T(0);
                    std::copy(in + x_lo + kx - 1, in + x_hi + kx - 1, out + x_lo);
                }
            }
        }
    }
}

template <typename T>
void col2im3x3_add(std::size_t channels, std::size_t height, std::size_t width, const T* col,
                   T* image) {
    const auto H = static_cast<long>(height);
    const auto W = static_cast<long>(width);
    const std::size_t plane = height * width;
#pragma omp parallel for schedule(static)
    for (long ci = 0; ci < static_cast<long>(channels); ++ci) {
        T* dst = image + ci * plane;
        for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
                const T* row = col + (ci * 9 + ky * 3 + kx) * plane;
                for (long y = 0; y < H; ++y) {
                    const long sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    const T* in = row + y * W;
                    T* out = dst + sy * W;
                    const long x_lo = kx == 0 ? 1 : 0;
                    const long x_hi = kx == 2 ? W - 1 : W;
                    for (long x = x_lo; x < x_hi; ++x) out[x + kx - 1] += in[x];
                }
            }
        }
    }
}

template <typename T>
void conv3x3_forward(const ConvGeom& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> output) {
    const std::size_t plane = g.plane();
    std::vector<T> col(g.patch() * plane);
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col3x3(g.in_channels, g.height, g.width, input.data() + b * g.in_channels * plane,
                  col.data());
        T* out = output.data() + b * g.out_channels * plane;
        gemm_nn(g.out_channels, plane, g.patch(), weight.data(), g.patch(), col.data(), plane, out,
                plane, false);
#pragma omp parallel for schedule(static)
        for (long co = 0; co < static_cast<long>(g.out_channels); ++co) {
            const T bv = bias[co];
            T* row = out + co * plane;
            for (std::size_t p = 0; p < plane; ++p) row[p] += bv;
        }
    }
}

template <typename T>
void conv3x3_backward(const ConvGeom& g, std::span<const T> grad_out, std::span<const T> input,
                      std::span<const T> weight, std::span<T> grad_in, std::span<T> grad_weight,
                      std::span<T> grad_bias) {
    const std::size_t plane = g.plane();
    const std::size_t patch = g.patch();
    std::vector<T> col(patch * plane);
    std::vector<T> weight_t;
    if (!grad_in.empty()) {
        weight_t.resize(patch * g.out_channels);
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            for (std::size_t r = 0; r < patch; ++r) weight_t[r * g.out_channels + co] = weight[co * patch + r];
        }
    }
    for (std::size_t b = 0; b < g.batch; ++b) {
        const T* dout = grad_out.data() + b * g.out_channels * plane;
        if (!grad_weight.empty()) {
            im2col3x3(g.in_channels, g.height, g.width, input.data() + b * g.in_channels * plane,
                      col.data());
            gemm_nt(g.out_channels, patch, plane, dout, plane, col.data(), plane,
                    grad_weight.data(), patch, true);
        }
        if (!grad_bias.empty()) {
#pragma omp parallel for schedule(static)
            for (long co = 0; co < static_cast<long>(g.out_channels); ++co) {
                T acc = 0;
                const T* row = dout + co * plane;
                for (std::size_t p = 0; p < plane; ++p) acc += row[p];
                grad_bias[co] += acc;
            }
        }
        if (!grad_in.empty()) {
            gemm_nn(patch, plane, g.out_channels, weight_t.data(), g.out_channels, dout, plane,
                    col.data(), plane, false);
            col2im3x3_add(g.in_channels, g.height, g.width, col.data(),
                          grad_in.data() + b * g.in_channels * plane);
        }
    }
}

template <typename T>
void group_norm_forward(const PlaneGeom& g, std::size_t groups, T eps, std::span<const T> input,
                        std::span<const T> gamma, std::span<const T> beta, std::span<T> output,
                        std::span<T> mean, std::span<T> rstd) {
    const std::size_t per_group = g.channels / groups;
    const std::size_t plane = g.plane();
    const std::size_t count = per_group * plane;
#pragma omp parallel for schedule(static)
    for (long bg = 0; bg < static_cast<long>(g.batch * groups); ++bg) {
        const std::size_t b = static_cast<std::size_t>(bg) / groups;
        const std::size_t gr = static_cast<std::size_t>(bg) % groups;
        const std::size_t base = (b * g.channels + gr * per_group) * plane;
        const T* x = input.data() + base;
        double sum = 0.0;
        for (std::size_t i = 0; i < count; ++i) sum += x[i];
        const double mu = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double d = x[i] - mu;
            sq += d * d;
        }
        const double rs = 1.0 / std::sqrt(sq / static_cast<double>(count) + static_cast<double>(eps));
        mean[bg] = static_cast<T>(mu);
        rstd[bg] = static_cast<T>(rs);
        for (std::size_t c = 0; c < per_group; ++c) {
            const std::size_t ch = gr * per_group + c;
            const T scale = static_cast<T>(gamma[ch] * rs);
            const T centre = static_cast<T>(mu);
            const T shift = beta[ch];
            const T* xs = x + c * plane;
            T* ys = output.data() + base + c * plane;
            for (std::size_t p = 0; p < plane; ++p) ys[p] = (xs[p] - centre) * scale + shift;
        }
    }
}

template <typename T>
void group_norm_backward(const PlaneGeom& g, std::size_t groups, std::span<const T> input,
                         std::span<const T> gamma, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> grad_out,
                         std::span<T> grad_in, std::span<T> grad_gamma, std::span<T> grad_beta) {
    const std::size_t per_group = g.channels / groups;
    const std::size_t plane = g.plane();
    const double count = static_cast<double>(per_group * plane);

    if (!grad_in.empty()) {
#pragma omp parallel for schedule(static)
        for (long bg = 0; bg < static_cast<long>(g.batch * groups); ++bg) {
            const std::size_t b = static_cast<std::size_t>(bg) / groups;
            const std::size_t gr = static_cast<std::size_t>(bg) % groups;
            const std::size_t base = (b * g.channels + gr * per_group) * plane;
            const double mu = mean[bg];
            const double rs = rstd[bg];
            double s1 = 0.0;
            double s2 = 0.0;
            for (std::size_t c = 0; c < per_group; ++c) {
                const double gm = gamma[gr * per_group + c];
                const T* xs = input.data() + base + c * plane;
                const T* dy = grad_out.data() + base + c * plane;
                double d1 = 0.0;
                double d2 = 0.0;
                for (std::size_t p = 0; p < plane; ++p) {
                    d1 += dy[p];
                    d2 += dy[p] * (xs[p] - mu);
                }
                s1 += gm * d1;
                s2 += gm * d2 * rs;
            }
            const double m1 = s1 / count;
            const double m2 = s2 / count;
            for (std::size_t c = 0; c < per_group; ++c) {
                const double gm = gamma[gr * per_group + c];
                const T* xs = input.data() + base + c * plane;
                const T* dy = grad_out.data() + base + c * plane;
                T* dx = grad_in.data() + base + c * plane;
                // dx = rs * (gm*dy - m1 - xhat*m2), expanded to a*dy + b*x + c.
                const T ca = static_cast<T>(rs * gm);
                const T cb = static_cast<T>(-rs * rs * m2);
                const T cc = static_cast<T>(rs * (rs * mu * m2 - m1));
                for (std::size_t p = 0; p < plane; ++p) dx[p] += ca * dy[p] + cb * xs[p] + cc;
            }
        }
    }

#pragma omp parallel for schedule(static)
    for (long ch = 0; ch < static_cast<long>(g.channels); ++ch) {
        const std::size_t gr = static_cast<std::size_t>(ch) / per_group;
        double dg = 0.0;
        double db = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
            const double mu = mean[b * groups + gr];
            const double rs = rstd[b * groups + gr];
            const std::size_t off = (b * g.channels + ch) * plane;
            const T* xs = input.data() + off;
            const T* dy = grad_out.data() + off;
            double s = 0.0;
            double sx = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                s += dy[p];
                sx += dy[p] * (xs[p] - mu);
            }
            dg += sx * rs;
            db += s;
        }
        if (!grad_gamma.empty()) grad_gamma[ch] += static_cast<T>(dg);
        if (!grad_beta.empty()) grad_beta[ch] += static_cast<T>(db);
    }
}

template <typename T>
void maxpool2_forward(const PlaneGeom& g, std::span<const T> input, std::span<T> output,
                      std::span<std::size_t> argmax) {
    const std::size_t oh = g.height / 2;
    const std::size_t ow = g.width / 2;
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < static_cast<long>(g.batch * g.channels); ++bc) {
        const std::size_t in_base = static_cast<std::size_t>(bc) * g.plane();
        const std::size_t out_base = static_cast<std::size_t>(bc) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best = in_base + 2 * y * g.width + 2 * x;
                const std::size_t cand[3] = {best + 1, best + g.width, best + g.width + 1};
                for (auto idx : cand) {
                    if (input[idx] > input[best]) best = idx;
                }
                output[out_base + y * ow + x] = input[best];
                argmax[out_base + y * ow + x] = best;
            }
        }
    }
}

template <typename T>
void maxpool2_backward(const PlaneGeom& g, std::span<const T> grad_out,
                       std::span<const std::size_t> argmax, std::span<T> grad_in) {
    const std::size_t out_plane = (g.height / 2) * (g.width / 2);
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < static_cast<long>(g.batch * g.channels); ++bc) {
        for (std::size_t i = 0; i < out_plane; ++i) {
            const std::size_t o = static_cast<std::size_t>(bc) * out_plane + i;
            grad_in[argmax[o]] += grad_out[o];
        }
    }
}

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                             std::span<const T> input, std::span<T> output) {
    const auto ty = detail::bilinear_taps(g.height, out_h);
    const auto tx = detail::bilinear_taps(g.width, out_w);
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < static_cast<long>(g.batch * g.channels); ++bc) {
        const T* src = input.data() + bc * g.plane();
        T* dst = output.data() + bc * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& a = ty[y];
            const T* r0 = src + a.i0 * g.width;
            const T* r1 = src + a.i1 * g.width;
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& b = tx[x];
                const double v = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                                 a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
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
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < static_cast<long>(g.batch * g.channels); ++bc) {
        const T* dout = grad_out.data() + bc * out_h * out_w;
        T* din = grad_in.data() + bc * g.plane();
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& a = ty[y];
            T* r0 = din + a.i0 * g.width;
            T* r1 = din + a.i1 * g.width;
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& b = tx[x];
                const double d = dout[y * out_w + x];
                r0[b.i0] += static_cast<T>(a.w0 * b.w0 * d);
                r0[b.i1] += static_cast<T>(a.w0 * b.w1 * d);
                r1[b.i0] += static_cast<T>(a.w1 * b.w0 * d);
                r1[b.i1] += static_cast<T>(a.w1 * b.w1 * d);
            }
        }
    }
}

#define SPAT_INSTANTIATE_PARALLEL(T)                                                            \
    template void im2col3x3<T>(std::size_t, std::size_t, std::size_t, const T*, T*);            \
    template void col2im3x3_add<T>(std::size_t, std::size_t, std::size_t, const T*, T*);        \
    template void conv3x3_forward<T>(const ConvGeom&, std::span<const T>, std::span<const T>,   \
                                     std::span<const T>, std::span<T>);                         \
    template void conv3x3_backward<T>(const ConvGeom&, std::span<const T>, std::span<const T>,  \
                                      std::span<const T>, std::span<T>, std::span<T>,           \
                                      std::span<T>);                                            \
    template void group_norm_forward<T>(const PlaneGeom&, std::size_t, T, std::span<const T>,   \
                                        std::span<const T>, std::span<const T>, std::span<T>,   \
                                        std::span<T>, std::span<T>);                            \
    template void group_norm_backward<T>(const PlaneGeom&, std::size_t, std::span<const T>,     \
                                         std::span<const T>, std::span<const T>,                \
                                         std::span<const T>, std::span<const T>, std::span<T>,  \
                                         std::span<T>, std::span<T>);                           \
    template void maxpool2_forward<T>(const PlaneGeom&, std::span<const T>, std::span<T>,       \
                                      std::span<std::size_t>);                                  \
    template void maxpool2_backward<T>(const PlaneGeom&, std::span<const T>,                    \
                                       std::span<const std::size_t>, std::span<T>);             \
    template void resize_bilinear_forward<T>(const PlaneGeom&, std::size_t, std::size_t,        \
                                             std::span<const T>, std::span<T>);                 \
    template void resize_bilinear_backward<T>(const PlaneGeom&, std::size_t, std::size_t,       \
                                              std::span<const T>, std::span<T>);

SPAT_INSTANTIATE_PARALLEL(float)
SPAT_INSTANTIATE_PARALLEL(double)

}  // namespace spat::kernels::parallel
