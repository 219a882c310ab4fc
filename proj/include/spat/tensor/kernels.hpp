#pragma once

// Raw compute kernels behind the autodiff ops.
//
// Each kernel exists twice: `serial` is a direct loop implementation kept as
// the reference, `parallel` is the OpenMP/blocked version the ops call.
// Parallel kernels assign every output element to exactly one thread and sum
// in a fixed order, so results do not depend on the thread count.
//
// Backward kernels accumulate (+=) into their gradient outputs.

#include <cstddef>
#include <span>

namespace spat::kernels {

// NCHW geometry of a 3x3, stride 1, zero-pad 1 convolution.
struct ConvGeom {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t plane() const { return height * width; }
    std::size_t patch() const { return in_channels * 9; }
};

struct PlaneGeom {
    std::size_t batch = 1;
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t plane() const { return height * width; }
    std::size_t numel() const { return batch * channels * height * width; }
};

namespace serial {

template <typename T>
void conv3x3_forward(const ConvGeom& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> output);
template <typename T>
void conv3x3_backward_input(const ConvGeom& g, std::span<const T> grad_out,
                            std::span<const T> weight, std::span<T> grad_in);
template <typename T>
void conv3x3_backward_params(const ConvGeom& g, std::span<const T> grad_out,
                             std::span<const T> input, std::span<T> grad_weight,
                             std::span<T> grad_bias);

// mean/rstd have batch*groups entries.
template <typename T>
void group_norm_forward(const PlaneGeom& g, std::size_t groups, T eps, std::span<const T> input,
                        std::span<const T> gamma, std::span<const T> beta, std::span<T> output,
                        std::span<T> mean, std::span<T> rstd);
template <typename T>
void group_norm_backward(const PlaneGeom& g, std::size_t groups, std::span<const T> input,
                         std::span<const T> gamma, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> grad_out,
                         std::span<T> grad_in, std::span<T> grad_gamma, std::span<T> grad_beta);

// `argmax` receives the flat input index of each window's maximum.
template <typename T>
void maxpool2_forward(const PlaneGeom& g, std::span<const T> input, std::span<T> output,
                      std::span<std::size_t> argmax);
template <typename T>
void maxpool2_backward(std::span<const T> grad_out, std::span<const std::size_t> argmax,
                       std::span<T> grad_in);

// Bilinear resampling with half-pixel centers (align_corners=false).
// `g` describes the input; output planes are out_h x out_w.
template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                             std::span<const T> input, std::span<T> output);
template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                              std::span<const T> grad_out, std::span<T> grad_in);

}  // namespace serial

namespace parallel {

// C[MxN] (+)= A[MxK] * B[KxN], all row-major with leading dims.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
// C[MxN] (+)= A[MxK] * B[NxK]^T.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

// col has (in_channels*9) rows of height*width entries for one image.
template <typename T>
void im2col3x3(std::size_t channels, std::size_t height, std::size_t width, const T* image, T* col);
template <typename T>
void col2im3x3_add(std::size_t channels, std::size_t height, std::size_t width, const T* col,
                   T* image);

template <typename T>
void conv3x3_forward(const ConvGeom& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> output);
// Either gradient span may be empty to skip that output.
template <typename T>
void conv3x3_backward(const ConvGeom& g, std::span<const T> grad_out, std::span<const T> input,
                      std::span<const T> weight, std::span<T> grad_in, std::span<T> grad_weight,
                      std::span<T> grad_bias);

template <typename T>
void group_norm_forward(const PlaneGeom& g, std::size_t groups, T eps, std::span<const T> input,
                        std::span<const T> gamma, std::span<const T> beta, std::span<T> output,
                        std::span<T> mean, std::span<T> rstd);
template <typename T>
void group_norm_backward(const PlaneGeom& g, std::size_t groups, std::span<const T> input,
                         std::span<const T> gamma, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> grad_out,
                         std::span<T> grad_in, std::span<T> grad_gamma, std::span<T> grad_beta);

template <typename T>
void maxpool2_forward(const PlaneGeom& g, std::span<const T> input, std::span<T> output,
                      std::span<std::size_t> argmax);
template <typename T>
void maxpool2_backward(const PlaneGeom& g, std::span<const T> grad_out,
                       std::span<const std::size_t> argmax, std::span<T> grad_in);

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                             std::span<const T> input, std::span<T> output);
template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, std::size_t out_h, std::size_t out_w,
                              std::span<const T> grad_out, std::span<T> grad_in);

}  // namespace parallel

// Number of OpenMP workers used by parallel kernels (1 without OpenMP).
int max_threads();
void set_max_threads(int n);

}  // namespace spat::kernels
