#include "permnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "permnet/error.hpp"

namespace permnet {
namespace {

std::size_t checked_volume(const Tensor::Dims& dims) {
  if (dims.empty() || dims.size() > 4) {
    raise(ErrorCode::kShape, "tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  std::size_t volume = 1;
  for (std::size_t d : dims) {
    if (d == 0) raise(ErrorCode::kShape, "zero extent in dims " + describe_dims(dims));
    volume *= d;
  }
  return volume;
}

}  // namespace

Tensor::Tensor(Dims dims, float fill) : dims_(std::move(dims)) {
  data_.assign(checked_volume(dims_), fill);
}

Tensor::Tensor(Dims dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (checked_volume(dims_) != data_.size()) {
    raise(ErrorCode::kShape, "dims " + describe_dims(dims_) + " hold " +
                                 std::to_string(checked_volume(dims_)) + " values, got " +
                                 std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    raise(ErrorCode::kShape, "axis " + std::to_string(axis) + " out of range for rank " +
                                 std::to_string(dims_.size()));
  }
  return dims_[axis];
}

std::span<const float> Tensor::channel(std::size_t c) const {
  if (rank() != 3 || c >= dims_[0]) {
    raise(ErrorCode::kShape, "channel " + std::to_string(c) + " of " + describe_dims(dims_));
  }
  const std::size_t plane = dims_[1] * dims_[2];
  return std::span<const float>(data_).subspan(c * plane, plane);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return dims_ == other.dims_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

std::string describe_dims(const Tensor::Dims& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(dims[i]);
  }
  return out.empty() ? "()" : out;
}

}  // namespace permnet
