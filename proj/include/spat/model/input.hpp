#pragma once

#include "spat/data/dataset.hpp"
#include "spat/tensor/tensor.hpp"

namespace spat {

// [1, C, H, W] with values v / 255. spat32 stacks directional images 1..32
// in index order (image k occupies channels 3(k-1) .. 3(k-1)+2); fullLight1
// uses the full-light image alone. An empty image slot throws DataError
// naming its index.
Tensor stack_to_input(const ImageStack& stack, InputMode mode);

std::size_t input_images(InputMode mode);

}  // namespace spat
