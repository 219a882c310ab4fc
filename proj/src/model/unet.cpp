#include "spat/model/unet.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "spat/errors.hpp"
#include "spat/tensor/ops.hpp"

namespace spat {

void UNetConfig::validate() const {
    if (in_images != 1 && in_images != 32) {
        throw ConfigError("in_images must be 1 or 32, got " + std::to_string(in_images));
    }
    if (channels_per_image == 0) throw ConfigError("channels_per_image must be >= 1");
    if (hidden_features == 0) throw ConfigError("hidden_features must be >= 1");
    if (depth < 2 || depth > 4) throw ConfigError("depth must be in [2, 4]");
    if (norm_groups == 0 || hidden_features % norm_groups != 0) {
        throw ConfigError("hidden_features (" + std::to_string(hidden_features) +
                          ") must be divisible by norm_groups (" + std::to_string(norm_groups) + ")");
    }
    if (height == 0 || width == 0 || height % stride() != 0 || width % stride() != 0) {
        throw ConfigError("input " + std::to_string(width) + "x" + std::to_string(height) +
                          " is not divisible by 2^depth = " + std::to_string(stride()));
    }
}

namespace {

template <typename T>
BasicTensor<T> uniform(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<T>(dist(rng));
    return BasicTensor<T>(std::move(shape), std::move(values), true);
}

}  // namespace

template <typename T>
std::size_t BasicUNet<T>::add_param(const std::string& name, BasicTensor<T> value) {
    value.set_requires_grad(true);
    params_.push_back(std::move(value));
    names_.push_back(name);
    return params_.size() - 1;
}

template <typename T>
typename BasicUNet<T>::Block BasicUNet<T>::add_block(const std::string& prefix,
                                                     std::size_t in_channels,
                                                     std::uint64_t& stream_seed) {
    const std::size_t f = config_.hidden_features;
    // One RNG stream per block keeps block weights independent of build order.
    std::mt19937_64 rng(stream_seed++);
    auto conv = [&](const std::string& name, std::size_t cin) {
        const double fan_in = static_cast<double>(cin * 9);
        auto w = add_param(name + ".weight", uniform<T>({f, cin, 3, 3}, std::sqrt(6.0 / fan_in), rng));
        auto b = add_param(name + ".bias", uniform<T>({f}, 1.0 / std::sqrt(fan_in), rng));
        return std::pair{w, b};
    };
    auto norm = [&](const std::string& name) {
        auto g = add_param(name + ".weight", BasicTensor<T>({f}, T(1)));
        auto b = add_param(name + ".bias", BasicTensor<T>({f}, T(0)));
        return std::pair{g, b};
    };
    Block block{};
    std::tie(block.conv1_w, block.conv1_b) = conv(prefix + ".conv1", in_channels);
    std::tie(block.gn1_g, block.gn1_b) = norm(prefix + ".gn1");
    std::tie(block.conv2_w, block.conv2_b) = conv(prefix + ".conv2", f);
    std::tie(block.gn2_g, block.gn2_b) = norm(prefix + ".gn2");
    return block;
}

template <typename T>
BasicUNet<T> BasicUNet<T>::build(const UNetConfig& config, std::uint64_t seed) {
    config.validate();
    BasicUNet net;
    net.config_ = config;
    std::seed_seq seq{seed, std::uint64_t{0x5eed5eedULL}};
    std::uint64_t stream_seed = 0;
    seq.generate(reinterpret_cast<std::uint32_t*>(&stream_seed),
                 reinterpret_cast<std::uint32_t*>(&stream_seed) + 2);

    const std::size_t f = config.hidden_features;
    std::size_t channels = config.input_channels();
    for (std::size_t l = 0; l < config.depth; ++l) {
        net.encoder_.push_back(net.add_block("enc" + std::to_string(l), channels, stream_seed));
        channels = f;
    }
    net.bottleneck_ = net.add_block("bottleneck", f, stream_seed);
    net.decoder_.resize(config.depth);
    for (std::size_t l = config.depth; l-- > 0;) {
        net.decoder_[l] = net.add_block("dec" + std::to_string(l), 2 * f, stream_seed);
    }
    std::mt19937_64 rng(stream_seed++);
    const double fan_in = static_cast<double>(f * 9);
    net.head_w_ = net.add_param("head.weight", uniform<T>({1, f, 3, 3}, std::sqrt(6.0 / fan_in), rng));
    net.head_b_ = net.add_param("head.bias", uniform<T>({1}, 1.0 / std::sqrt(fan_in), rng));
    return net;
}

template <typename T>
BasicTensor<T> BasicUNet<T>::run_block(const Block& b, const BasicTensor<T>& x) const {
    const std::size_t groups = config_.norm_groups;
    auto h = ops::conv2d(x, params_[b.conv1_w], params_[b.conv1_b]);
    h = ops::relu(ops::group_norm(h, groups, params_[b.gn1_g], params_[b.gn1_b]));
    h = ops::conv2d(h, params_[b.conv2_w], params_[b.conv2_b]);
    return ops::relu(ops::group_norm(h, groups, params_[b.gn2_g], params_[b.gn2_b]));
}

template <typename T>
BasicTensor<T> BasicUNet<T>::forward(const BasicTensor<T>& input) const {
    if (input.rank() != 4) throw ShapeError("UNet input must be NCHW, got " + shape_string(input.shape()));
    if (input.dim(1) != config_.input_channels()) {
        throw ShapeError("UNet expects " + std::to_string(config_.input_channels()) +
                         " input channels, got " + std::to_string(input.dim(1)));
    }
    const std::size_t stride = config_.stride();
    if (input.dim(2) % stride != 0 || input.dim(3) % stride != 0) {
        throw ShapeError("UNet input " + shape_string(input.shape()) +
                         " spatial dims must be divisible by " + std::to_string(stride));
    }
    std::vector<BasicTensor<T>> skips;
    BasicTensor<T> x = input;
    for (const auto& block : encoder_) {
        x = run_block(block, x);
        skips.push_back(x);
        x = ops::maxpool2(x);
    }
    x = run_block(bottleneck_, x);
    for (std::size_t l = config_.depth; l-- > 0;) {
        x = ops::upsample_bilinear2(x);
        x = ops::concat_channels(std::vector<BasicTensor<T>>{skips[l], x});
        x = run_block(decoder_[l], x);
    }
    return ops::sigmoid(ops::conv2d(x, params_[head_w_], params_[head_b_]));
}

template <typename T>
const BasicTensor<T>& BasicUNet<T>::parameter(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return params_[i];
    }
    throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t BasicUNet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

template <typename T>
void BasicUNet<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template <typename T>
void BasicUNet<T>::set_requires_grad(bool flag) {
    for (auto& p : params_) p.set_requires_grad(flag);
}

template class BasicUNet<float>;
template class BasicUNet<double>;

std::vector<NamedTensor> named_parameters(const UNet& model) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        out.push_back({model.parameter_names()[i], model.parameters()[i]});
    }
    return out;
}

UNet unet_from_parameters(const UNetConfig& config, const std::vector<NamedTensor>& params) {
    auto model = UNet::build(config, 0);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        const auto& name = model.parameter_names()[i];
        auto it = std::find_if(params.begin(), params.end(),
                               [&](const NamedTensor& p) { return p.name == name; });
        if (it == params.end()) throw DataError("checkpoint is missing parameter " + name);
        auto& dst = model.parameters()[i];
        if (it->tensor.shape() != dst.shape()) {
            throw DataError("checkpoint parameter " + name + " has shape " +
                            shape_string(it->tensor.shape()) + ", model expects " +
                            shape_string(dst.shape()));
        }
        std::copy(it->tensor.data().begin(), it->tensor.data().end(), dst.data().begin());
    }
    return model;
}

}  // namespace spat
