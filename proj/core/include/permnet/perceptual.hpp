#pragma once

#include "permnet/perm_key.hpp"
#include "permnet/tensor.hpp"

namespace permnet {

// Acquisition-time transform: the same spatial permutation applied to every
// channel of a C x H x W image. Throws kShape naming both grids on mismatch.
Tensor shuffle(const Tensor& image, const PermKey& key);

// Inverse of shuffle under the same key; gathers by invert_key(key).
Tensor unshuffle(const Tensor& image, const PermKey& key);

}  // namespace permnet
