#include "permnet/perceptual.hpp"

#include <string>

#include "permnet/error.hpp"
#include "permnet/reference_ops.hpp"

namespace permnet {
namespace {

void check_grid(const Tensor& image, const PermKey& key) {
  if (image.rank() != 3) {
    raise(ErrorCode::kShape, "image must be C x H x W, got " + describe_dims(image.dims()));
  }
  if (image.dim(1) != key.height() || image.dim(2) != key.width()) {
    raise(ErrorCode::kShape, "image grid " + std::to_string(image.dim(1)) + "x" +
                                 std::to_string(image.dim(2)) + " does not match key grid " +
                                 describe_grid(key));
  }
}

}  // namespace

Tensor shuffle(const Tensor& image, const PermKey& key) {
  check_grid(image, key);
  return gather_spatial(image, key);
}

Tensor unshuffle(const Tensor& image, const PermKey& key) {
  check_grid(image, key);
  return gather_spatial(image, invert_key(key));
}

}  // namespace permnet
