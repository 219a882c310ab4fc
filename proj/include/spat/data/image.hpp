#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace spat {

// 8-bit RGB, row-major, channels interleaved.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;

    Image8() = default;
    Image8(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
    bool operator==(const Image8&) const = default;
};

struct BinaryMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1
    double threshold = std::numeric_limits<double>::quiet_NaN();  // NaN when not produced by binarize()

    BinaryMask() = default;
    BinaryMask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

    bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
    void set(std::size_t x, std::size_t y, bool v = true) { bits[y * width + x] = v ? 1 : 0; }
    std::size_t count() const;
};

// Probability or intensity map, row-major.
struct FloatMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;

    FloatMap() = default;
    FloatMap(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), values(w * h, fill) {}
    float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

// PNG I/O through libpng. Reading accepts gray, gray+alpha, RGB and RGBA at
// 8 or 16 bits and converts to 8-bit RGB. Errors throw DataError.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);
void write_png_gray16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                      const std::vector<std::uint16_t>& values);

// Exact float map files: "SPATM", u32 width, u32 height, then width * height
// little-endian f32 values, row-major.
void write_float_map(const std::filesystem::path& path, const FloatMap& map);
FloatMap read_float_map(const std::filesystem::path& path);

}  // namespace spat
