#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace spat::kernels::detail {

// Source taps for one output coordinate under half-pixel-center sampling.
struct Tap {
    std::size_t i0;
    std::size_t i1;
    double w0;
    double w1;
};

inline std::vector<Tap> bilinear_taps(std::size_t in_size, std::size_t out_size) {
    std::vector<Tap> taps(out_size);
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    for (std::size_t o = 0; o < out_size; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in_size - 1) i0 = in_size - 1;
        const std::size_t i1 = std::min(i0 + 1, in_size - 1);
        const double w1 = src - static_cast<double>(i0);
        taps[o] = Tap{i0, i1, 1.0 - w1, w1};
    }
    return taps;
}

}  // namespace spat::kernels::detail
