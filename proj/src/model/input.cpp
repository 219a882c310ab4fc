#include "spat/model/input.hpp"

#include "spat/errors.hpp"

namespace spat {

std::size_t input_images(InputMode mode) { return mode == InputMode::spat32 ? kDirectionalImages : 1; }

namespace {

void copy_planes(const Image8& img, std::size_t w, std::size_t h, float* dst) {
    const std::size_t plane = w * h;
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<float>(img.rgb[i * 3 + c]) / 255.0f;
    }
}

}  // namespace

Tensor stack_to_input(const ImageStack& stack, InputMode mode) {
    const std::size_t w = stack.width;
    const std::size_t h = stack.height;
    const std::size_t n = input_images(mode);
    auto check = [&](const Image8& img, const std::string& what) {
        if (img.rgb.empty()) throw DataError("case " + stack.case_id + ": missing " + what);
        if (img.width != w || img.height != h) throw DataError("case " + stack.case_id + ": " + what + " has mismatched dims");
    };
    std::vector<float> values(n * 3 * w * h);
    if (mode == InputMode::spat32) {
        for (std::size_t k = 0; k < n; ++k) {
            check(stack.directional[k], "image index " + std::to_string(k + 1));
            copy_planes(stack.directional[k], w, h, values.data() + k * 3 * w * h);
        }
    } else {
        check(stack.full_light, "full-light image");
        copy_planes(stack.full_light, w, h, values.data());
    }
    return Tensor({1, n * 3, h, w}, std::move(values));
}

}  // namespace spat
