#include "permnet/perm_key.hpp"

#include <numeric>
#include <utility>

#include "permnet/error.hpp"

namespace permnet {

PermKey::PermKey(std::size_t height, std::size_t width, std::vector<std::uint32_t> map)
    : height_(height), width_(width), map_(std::move(map)) {
  if (height_ == 0 || width_ == 0) {
    raise(ErrorCode::kParameter, "key grid must have positive area, got " + describe_grid(*this));
  }
  if (height_ * width_ != map_.size()) {
    raise(ErrorCode::kIntegrity, "key grid " + describe_grid(*this) + " needs " +
                                     std::to_string(height_ * width_) + " entries, got " +
                                     std::to_string(map_.size()));
  }
  validate_bijection(map_);
}

PermKey PermKey::identity(std::size_t height, std::size_t width) {
  std::vector<std::uint32_t> map(height * width);
  std::iota(map.begin(), map.end(), 0u);
  return PermKey(height, width, std::move(map));
}

bool PermKey::is_identity() const noexcept {
  for (std::size_t q = 0; q < map_.size(); ++q) {
    if (map_[q] != q) return false;
  }
  return true;
}

void validate_bijection(std::span<const std::uint32_t> map) {
  std::vector<bool> seen(map.size(), false);
  for (std::size_t q = 0; q < map.size(); ++q) {
    const std::uint32_t source = map[q];
    if (source >= map.size()) {
      raise(ErrorCode::kIntegrity, "key entry " + std::to_string(q) + " names source " +
                                       std::to_string(source) + " outside [0, " +
                                       std::to_string(map.size()) + ")");
    }
    if (seen[source]) {
      raise(ErrorCode::kIntegrity, "key is not a bijection: index " + std::to_string(source) +
                                       " duplicated at entry " + std::to_string(q));
    }
    seen[source] = true;
  }
}

PermKey generate_key(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) {
    raise(ErrorCode::kParameter, "cannot generate a key over a zero-area grid " +
                                     std::to_string(height) + "x" + std::to_string(width));
  }
  std::vector<std::uint32_t> map(height * width);
  std::iota(map.begin(), map.end(), 0u);
  SplitMix64 rng(seed);
  for (std::size_t i = map.size() - 1; i > 0; --i) {
    const std::size_t j = rng.next() % (i + 1);
    std::swap(map[i], map[j]);
  }
  return PermKey(height, width, std::move(map));
}

PermKey invert_key(const PermKey& key) {
  validate_bijection(key.map());
  std::vector<std::uint32_t> inverse(key.area());
  for (std::size_t q = 0; q < key.area(); ++q) {
    inverse[key[q]] = static_cast<std::uint32_t>(q);
  }
  return PermKey(key.height(), key.width(), std::move(inverse));
}

std::string describe_grid(const PermKey& key) {
  return std::to_string(key.height()) + "x" + std::to_string(key.width());
}

}  // namespace permnet
