#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace permnet {

// A bijection on an h x w pixel grid in gather form: entry q of map() names
// the source linear index (row-major) of the pixel that lands at q, so
// shuffled[q] = original[map[q]].
class PermKey {
 public:
  PermKey() = default;
  // Validates the bijection; throws Error(kIntegrity) naming the first
  // duplicated or out-of-range index.
  PermKey(std::size_t height, std::size_t width, std::vector<std::uint32_t> map);

  static PermKey identity(std::size_t height, std::size_t width);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t area() const noexcept { return map_.size(); }
  std::span<const std::uint32_t> map() const noexcept { return map_; }
  std::uint32_t operator[](std::size_t q) const { return map_[q]; }

  bool is_identity() const noexcept;
  bool same_grid(const PermKey& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const PermKey&, const PermKey&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint32_t> map_;
};

// Ordered per-stage keys: the acquisition key first, then one per conv/pool
// output, plus the scalar that regenerates the drawn entries.
struct KeyChain {
  std::vector<PermKey> entries;
  std::uint64_t session_seed = 0;
};

// splitmix64 stream; the generator behind every drawn key.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates over [0, h*w) walking i from h*w-1 down to 1, swapping i with
// next() % (i+1). Deterministic in (height, width, seed).
PermKey generate_key(std::size_t height, std::size_t width, std::uint64_t seed);

PermKey invert_key(const PermKey& key);

// Throws Error(kIntegrity) unless map is a permutation of [0, map.size()).
void validate_bijection(std::span<const std::uint32_t> map);

std::string describe_grid(const PermKey& key);

}  // namespace permnet
