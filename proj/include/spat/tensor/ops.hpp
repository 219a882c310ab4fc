#pragma once

#include <vector>

#include "spat/tensor/tensor.hpp"

// Differentiable operations. 4-D tensors are NCHW.
namespace spat::ops {

// 3x3 cross-correlation, stride 1, zero padding 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// Normalizes each (sample, group) with the population variance, then applies
// the per-channel affine gamma * xhat + beta.
template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& input, std::size_t num_groups,
                          const BasicTensor<T>& gamma, const BasicTensor<T>& beta, T eps = T(1e-5));

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input);

// 2x2 window, stride 2.
template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& input);

// Doubles H and W with half-pixel-center bilinear interpolation.
template <typename T>
BasicTensor<T> upsample_bilinear2(const BasicTensor<T>& input);

// Resamples to an arbitrary size with the same interpolation rule.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs);

// Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7].
template <typename T>
BasicTensor<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor);

// Elementwise product; used by tests to build weighted scalar objectives.
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

inline constexpr double kBceClamp = 1e-7;

}  // namespace spat::ops
