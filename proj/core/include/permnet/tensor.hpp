#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace permnet {

// Dense row-major single-precision array of rank 1..4. Layouts in use:
// C x H x W for images and feature maps, Cout x Cin x n x n for conv weights,
// K x D for dense weights, C for per-channel vectors.
class Tensor {
 public:
  using Dims = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Dims dims, float fill = 0.0f);
  Tensor(Dims dims, std::vector<float> data);

  static Tensor chw(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f) {
    return Tensor({c, h, w}, fill);
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 accessors (channel, row, column).
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }

  // Contiguous view of one channel of a C x H x W tensor.
  std::span<const float> channel(std::size_t c) const;

  bool all_finite() const noexcept;

  // Bitwise comparison, so -0.0f != 0.0f and identical NaN payloads match.
  bool bitwise_equal(const Tensor& other) const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Dims dims_;
  std::vector<float> data_;
};

std::string describe_dims(const Tensor::Dims& dims);

}  // namespace permnet
