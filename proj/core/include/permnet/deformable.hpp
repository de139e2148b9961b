#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "permnet/perm_key.hpp"
#include "permnet/reference_ops.hpp"
#include "permnet/tensor.hpp"

namespace permnet {

struct ConvParams {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  WindowGeometry geometry() const { return {kernel, stride, padding}; }
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct PoolParams {
  std::size_t window = 2;
  std::size_t stride = 2;
  std::size_t padding = 0;

  WindowGeometry geometry() const { return {window, stride, padding}; }
  friend bool operator==(const PoolParams&, const PoolParams&) = default;
};

/// Per-output-position, per-tap sampling displacements for a deformable
/// operator with an n x n window over an h' x w' output grid.
///
/// Layout is h' x w' x (2*n*n). For tap (a, b) in row-major order the pair
/// lives at t = 2*(a*n + b): values[t] is the row displacement and
/// values[t + 1] the column displacement. One pair is shared by every input
/// channel. The tap samples the input at base + displacement, where
/// base = (i*stride - padding + a, j*stride - padding + b).
class OffsetVolume {
 public:
  OffsetVolume() = default;
  OffsetVolume(std::size_t out_height, std::size_t out_width, std::size_t kernel);
  OffsetVolume(std::size_t out_height, std::size_t out_width, std::size_t kernel,
               std::vector<float> values);

  std::size_t out_height() const noexcept { return out_height_; }
  std::size_t out_width() const noexcept { return out_width_; }
  std::size_t kernel() const noexcept { return kernel_; }
  std::size_t pairs_per_position() const noexcept { return kernel_ * kernel_; }
  std::array<std::size_t, 3> shape() const noexcept {
    return {out_height_, out_width_, 2 * kernel_ * kernel_};
  }

  std::size_t index(std::size_t i, std::size_t j, std::size_t a, std::size_t b) const noexcept {
    return ((i * out_width_ + j) * kernel_ * kernel_ + a * kernel_ + b) * 2;
  }
  float dy(std::size_t i, std::size_t j, std::size_t a, std::size_t b) const noexcept {
    return values_[index(i, j, a, b)];
  }
  float dx(std::size_t i, std::size_t j, std::size_t a, std::size_t b) const noexcept {
    return values_[index(i, j, a, b) + 1];
  }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  bool all_integral() const noexcept;

  friend bool operator==(const OffsetVolume&, const OffsetVolume&) = default;

 private:
  std::size_t out_height_ = 0;
  std::size_t out_width_ = 0;
  std::size_t kernel_ = 0;
  std::vector<float> values_;
};

// Absolute coordinate every out-of-bounds tap is steered to. It lies outside
// any grid, so it reads as 0 under zero padding and drops out of a max.
inline constexpr std::ptrdiff_t kSentinelCoord = -1;

enum class OutOfBounds { kZero, kNegInf };

struct ChannelView {
  std::span<const float> data;
  std::size_t height = 0;
  std::size_t width = 0;
};

ChannelView channel_view(const Tensor& t, std::size_t c);
// Rank-2 H x W tensor viewed as one channel.
ChannelView plane_view(const Tensor& t);

// Integral (y, x): a pure gather, the oob value outside the grid, no
// arithmetic. Fractional (y, x): four-neighbour bilinear interpolation with
// out-of-grid neighbours reading 0; only valid in kZero mode.
float bilinear_sample(ChannelView channel, float y, float x, OutOfBounds oob);

// Offsets that make a deformable conv over an input shuffled by key_in emit
// the plain conv output shuffled by key_out. For output (i, j) and tap (a, b)
// the plain output position is (u, v) = key_out(i, j) and the plain tap
// target T = (u*stride - padding + a, v*stride - padding + b). An in-grid T
// is found in the shuffled input at invert(key_in)(T); an out-of-grid T is
// sent to the sentinel (-1, -1). Displacement = destination - base.
OffsetVolume derive_conv_offsets(const PermKey& key_in, const PermKey& key_out,
                                 const ConvParams& params);

// Same construction with pooling geometry. Also rejects any window whose taps
// would all be sentinels.
OffsetVolume derive_pool_offsets(const PermKey& key_in, const PermKey& key_out,
                                 const PoolParams& params);

// bias + sum_c sum_taps w * sample(input[c], base + offset, zero), in the
// same order as conv2d_ref.
Tensor deform_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     const OffsetVolume& offsets, const ConvParams& params);

// Max over taps (row-major, first maximum wins) of
// sample(input[c], base + offset, neg_inf).
Tensor deform_maxpool2d(const Tensor& input, const OffsetVolume& offsets,
                        const PoolParams& params);

}  // namespace permnet
