#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spat/tensor/tensor.hpp"

namespace spat {

// Parameter checkpoint layout (all integers little-endian):
//   "SPATW" | u32 version
//   repeated until EOF:
//     u32 name_len | name (UTF-8) | u32 rank | u64 dims[rank] | f32 values[prod(dims)]
inline constexpr std::string_view kCheckpointMagic = "SPATW";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& params);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace spat
