#include "spat/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "spat/errors.hpp"

namespace spat {

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw DataError("cannot open " + path.string());
    return f;
}

// libpng reports errors through longjmp; the message is kept here and
// rethrown as DataError once control is back in C++ frames.
void png_fail(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    *err = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    const std::string where = path.string();
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    if (!png) throw DataError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp& p;
        png_infop& i;
        ~Guard() { png_destroy_read_struct(&p, &i, nullptr); }
    } guard{png, info};

    Image8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) throw DataError("PNG error in " + where + ": " + err);
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img = Image8(png_get_image_width(png, info), png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != img.width * 3) throw DataError("unsupported PNG layout in " + where);
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + y * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    return img;
}

namespace {

void write_rows(const std::filesystem::path& path, std::size_t width, std::size_t height, int color,
                int depth, std::vector<png_bytep>& rows) {
    auto file = open_file(path, "wb");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    if (!png) throw DataError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp& p;
        png_infop& i;
        ~Guard() { png_destroy_write_struct(&p, &i); }
    } guard{png, info};

    if (setjmp(png_jmpbuf(png))) throw DataError("PNG error in " + path.string() + ": " + err);
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.rgb.size() != image.width * image.height * 3) throw ShapeError("Image8 buffer size mismatch");
    std::vector<png_bytep> rows(image.height);
    auto* base = const_cast<std::uint8_t*>(image.rgb.data());
    for (std::size_t y = 0; y < image.height; ++y) rows[y] = base + y * image.width * 3;
    write_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png_gray16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                      const std::vector<std::uint16_t>& values) {
    if (values.size() != width * height) throw ShapeError("gray16 buffer size mismatch");
    std::vector<png_bytep> rows(height);
    auto* base = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(values.data()));
    for (std::size_t y = 0; y < height; ++y) rows[y] = base + y * width * 2;
    write_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

namespace {

constexpr char kMapMagic[5] = {'S', 'P', 'A', 'T', 'M'};

}  // namespace

void write_float_map(const std::filesystem::path& path, const FloatMap& map) {
    if (map.values.size() != map.width * map.height) throw ShapeError("float map size does not match its dims");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(map.width), static_cast<std::uint32_t>(map.height)};
    out.write(kMapMagic, sizeof kMapMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(map.values.data()), std::streamsize(map.values.size() * sizeof(float)));
    if (!out) throw DataError("short write to " + path.string());
}

FloatMap read_float_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[5];
    std::uint32_t dims[2];
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::memcmp(magic, kMapMagic, sizeof magic) != 0) throw DataError(path.string() + ": not a float map");
    FloatMap m(dims[0], dims[1]);
    in.read(reinterpret_cast<char*>(m.values.data()), std::streamsize(m.values.size() * sizeof(float)));
    if (in.gcount() != std::streamsize(m.values.size() * sizeof(float))) throw DataError(path.string() + ": truncated float map");
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes in float map");
    return m;
}

}  // namespace spat
