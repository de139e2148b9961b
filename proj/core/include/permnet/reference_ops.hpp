#pragma once

#include <cstddef>
#include <optional>

#include "permnet/perm_key.hpp"
#include "permnet/tensor.hpp"

namespace permnet {

// Geometry shared by convolution and pooling windows. padding < kernel.
struct WindowGeometry {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // floor((extent + 2*padding - kernel) / stride) + 1; throws kParameter when
  // the window does not fit or padding >= kernel.
  std::size_t output_extent(std::size_t extent) const;
  void validate() const;
};

// Plain operators. They define ground truth for every equivalence check and
// fix the floating-point evaluation order:
//   conv/dense: start at bias, channel (or input index) ascending outer,
//               taps row-major inner, one multiply-add per tap.
//   maxpool:    taps row-major, strict '>' so the first maximum wins.
//   gap:        row-major sum, then a single divide by H*W.

Tensor conv2d_ref(const Tensor& input, const Tensor& weights, const Tensor& bias,
                  std::size_t stride, std::size_t padding);

Tensor maxpool2d_ref(const Tensor& input, std::size_t window, std::size_t stride,
                     std::size_t padding);

enum class PointwiseKind { kRelu, kAffine };

// Channel is axis 0; every other axis is treated as position. Rank-1 inputs
// therefore take one scale/shift per element.
Tensor pointwise_ref(const Tensor& input, PointwiseKind kind,
                     const Tensor* scale = nullptr, const Tensor* shift = nullptr);

Tensor relu_ref(const Tensor& input);
Tensor affine_ref(const Tensor& input, const Tensor& scale, const Tensor& shift);

Tensor gap_ref(const Tensor& input);

Tensor dense_ref(const Tensor& input, const Tensor& weights, const Tensor& bias);

// out[c, q] = input[c, key[q]]: pure data movement, no arithmetic.
Tensor gather_spatial(const Tensor& input, const PermKey& key);

Tensor add_ref(const Tensor& lhs, const Tensor& rhs);

Tensor flatten_ref(const Tensor& input);

}  // namespace permnet
