#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spat/tensor/checkpoint.hpp"
#include "spat/tensor/tensor.hpp"

namespace spat {

struct UNetConfig {
    std::size_t in_images = 32;          // 32 for the lighting stack, 1 for the full-light baseline
    std::size_t channels_per_image = 3;
    std::size_t hidden_features = 64;
    std::size_t depth = 3;               // number of maxpool levels
    std::size_t norm_groups = 8;
    std::size_t height = 128;
    std::size_t width = 192;

    std::size_t input_channels() const { return in_images * channels_per_image; }
    std::size_t stride() const { return std::size_t{1} << depth; }

    // Throws ConfigError.
    void validate() const;
};

// U-Net pixel classifier: [B, in_images*3, H, W] -> [B, 1, H, W] in (0, 1).
//
// Parameter names are stable across versions:
//   enc{l}.conv{1,2}.{weight,bias}, enc{l}.gn{1,2}.{weight,bias}   l = 0..depth-1
//   bottleneck.conv{1,2}.*, bottleneck.gn{1,2}.*
//   dec{l}.conv{1,2}.*, dec{l}.gn{1,2}.*                            l = depth-1..0
//   head.weight, head.bias
template <typename T>
class BasicUNet {
public:
    // Kaiming-uniform conv weights from `seed`; group norm gamma = 1, beta = 0.
    static BasicUNet build(const UNetConfig& config, std::uint64_t seed);

    BasicTensor<T> forward(const BasicTensor<T>& input) const;

    const UNetConfig& config() const { return config_; }
    std::vector<BasicTensor<T>>& parameters() { return params_; }
    const std::vector<BasicTensor<T>>& parameters() const { return params_; }
    const std::vector<std::string>& parameter_names() const { return names_; }
    const BasicTensor<T>& parameter(const std::string& name) const;
    std::size_t parameter_count() const;

    void zero_grad();
    void set_requires_grad(bool flag);

private:
    struct Block {
        std::size_t conv1_w, conv1_b, gn1_g, gn1_b, conv2_w, conv2_b, gn2_g, gn2_b;
    };

    BasicTensor<T> run_block(const Block& block, const BasicTensor<T>& x) const;
    Block add_block(const std::string& prefix, std::size_t in_channels, std::uint64_t& stream_seed);
    std::size_t add_param(const std::string& name, BasicTensor<T> value);

    UNetConfig config_;
    std::vector<BasicTensor<T>> params_;
    std::vector<std::string> names_;
    std::vector<Block> encoder_;
    Block bottleneck_{};
    std::vector<Block> decoder_;  // decoder_[l] runs at encoder level l
    std::size_t head_w_ = 0;
    std::size_t head_b_ = 0;
};

using UNet = BasicUNet<float>;
using UNetD = BasicUNet<double>;

extern template class BasicUNet<float>;
extern template class BasicUNet<double>;

std::vector<NamedTensor> named_parameters(const UNet& model);
// Builds the architecture from `config` and copies values by name; missing
// or mis-shaped entries throw DataError.
UNet unet_from_parameters(const UNetConfig& config, const std::vector<NamedTensor>& params);

}  // namespace spat
