#include "permnet/reference_ops.hpp"

#include <limits>
#include <string>

#include "permnet/error.hpp"

namespace permnet {
namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    raise(ErrorCode::kShape, std::string(what) + " expects C x H x W, got " +
                                 describe_dims(t.dims()));
  }
}

}  // namespace

void WindowGeometry::validate() const {
  if (kernel == 0) raise(ErrorCode::kParameter, "kernel size must be positive");
  if (stride == 0) raise(ErrorCode::kParameter, "stride must be positive");
  if (padding >= kernel) {
    raise(ErrorCode::kParameter, "padding " + std::to_string(padding) +
                                     " must be smaller than kernel " + std::to_string(kernel));
  }
}

std::size_t WindowGeometry::output_extent(std::size_t extent) const {
  validate();
  const std::size_t padded = extent + 2 * padding;
  if (padded < kernel) {
    raise(ErrorCode::kParameter, "window " + std::to_string(kernel) + " exceeds padded extent " +
                                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d_ref(const Tensor& input, const Tensor& weights, const Tensor& bias,
                  std::size_t stride, std::size_t padding) {
  require_chw(input, "conv2d");
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    raise(ErrorCode::kShape, "conv2d weights must be Cout x Cin x n x n, got " +
                                 describe_dims(weights.dims()));
  }
  const std::size_t c_in = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const std::size_t c_out = weights.dim(0);
  const std::size_t n = weights.dim(2);
  if (weights.dim(1) != c_in) {
    raise(ErrorCode::kShape, "conv2d weights expect " + std::to_string(weights.dim(1)) +
                                 " input channels, input has " + std::to_string(c_in));
  }
  if (bias.rank() != 1 || bias.dim(0) != c_out) {
    raise(ErrorCode::kShape, "conv2d bias must have " + std::to_string(c_out) + " entries, got " +
                                 describe_dims(bias.dims()));
  }
  const WindowGeometry geom{n, stride, padding};
  const std::size_t out_h = geom.output_extent(h);
  const std::size_t out_w = geom.output_extent(w);

  Tensor out = Tensor::chw(c_out, out_h, out_w);
  const auto sh = static_cast<std::ptrdiff_t>(h);
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        float acc = bias[o];
        for (std::size_t c = 0; c < c_in; ++c) {
          for (std::size_t a = 0; a < n; ++a) {
            const auto y = static_cast<std::ptrdiff_t>(i * stride + a) -
                           static_cast<std::ptrdiff_t>(padding);
            for (std::size_t b = 0; b < n; ++b) {
              const auto x = static_cast<std::ptrdiff_t>(j * stride + b) -
                             static_cast<std::ptrdiff_t>(padding);
              const float v = (y >= 0 && y < sh && x >= 0 && x < sw)
                                  ? input.at(c, static_cast<std::size_t>(y),
                                             static_cast<std::size_t>(x))
                                  : 0.0f;
              acc += weights[((o * c_in + c) * n + a) * n + b] * v;
            }
          }
        }
        out.at(o, i, j) = acc;
      }
    }
  }
  return out;
}

Tensor maxpool2d_ref(const Tensor& input, std::size_t window, std::size_t stride,
                     std::size_t padding) {
  require_chw(input, "maxpool2d");
  const std::size_t channels = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const WindowGeometry geom{window, stride, padding};
  const std::size_t out_h = geom.output_extent(h);
  const std::size_t out_w = geom.output_extent(w);

  Tensor out = Tensor::chw(channels, out_h, out_w);
  const auto sh = static_cast<std::ptrdiff_t>(h);
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t a = 0; a < window; ++a) {
          const auto y = static_cast<std::ptrdiff_t>(i * stride + a) -
                         static_cast<std::ptrdiff_t>(padding);
          for (std::size_t b = 0; b < window; ++b) {
            const auto x = static_cast<std::ptrdiff_t>(j * stride + b) -
                           static_cast<std::ptrdiff_t>(padding);
            if (y < 0 || y >= sh || x < 0 || x >= sw) continue;
            const float v = input.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            if (v > best) best = v;
          }
        }
        out.at(c, i, j) = best;
      }
    }
  }
  return out;
}

Tensor pointwise_ref(const Tensor& input, PointwiseKind kind, const Tensor* scale,
                     const Tensor* shift) {
  Tensor out = input;
  auto data = out.data();
  if (kind == PointwiseKind::kRelu) {
    for (float& v : data) v = v > 0.0f ? v : 0.0f;
    return out;
  }
  const std::size_t channels = input.dim(0);
  if (scale == nullptr || shift == nullptr) {
    raise(ErrorCode::kParameter, "affine requires both scale and shift");
  }
  if (scale->rank() != 1 || scale->dim(0) != channels || shift->rank() != 1 ||
      shift->dim(0) != channels) {
    raise(ErrorCode::kShape, "affine scale/shift must have " + std::to_string(channels) +
                                 " entries, got " + describe_dims(scale->dims()) + " and " +
                                 describe_dims(shift->dims()));
  }
  const std::size_t per_channel = input.size() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    const float s = (*scale)[c];
    const float t = (*shift)[c];
    for (std::size_t k = 0; k < per_channel; ++k) {
      float& v = data[c * per_channel + k];
      v = s * v + t;
    }
  }
  return out;
}

Tensor relu_ref(const Tensor& input) { return pointwise_ref(input, PointwiseKind::kRelu); }

Tensor affine_ref(const Tensor& input, const Tensor& scale, const Tensor& shift) {
  return pointwise_ref(input, PointwiseKind::kAffine, &scale, &shift);
}

Tensor gap_ref(const Tensor& input) {
  require_chw(input, "global_avg_pool");
  const std::size_t channels = input.dim(0);
  const std::size_t plane = input.dim(1) * input.dim(2);
  Tensor out({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    float sum = 0.0f;
    for (float v : input.channel(c)) sum += v;
    out[c] = sum / static_cast<float>(plane);
  }
  return out;
}

Tensor dense_ref(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 1) {
    raise(ErrorCode::kShape, "dense expects a vector input, got " + describe_dims(input.dims()));
  }
  if (weights.rank() != 2 || weights.dim(1) != input.dim(0)) {
    raise(ErrorCode::kShape, "dense weights " + describe_dims(weights.dims()) +
                                 " do not accept input of length " + std::to_string(input.dim(0)));
  }
  const std::size_t k_out = weights.dim(0);
  const std::size_t d_in = weights.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != k_out) {
    raise(ErrorCode::kShape, "dense bias must have " + std::to_string(k_out) + " entries, got " +
                                 describe_dims(bias.dims()));
  }
  Tensor out({k_out});
  for (std::size_t k = 0; k < k_out; ++k) {
    float acc = bias[k];
    for (std::size_t d = 0; d < d_in; ++d) acc += weights[k * d_in + d] * input[d];
    out[k] = acc;
  }
  return out;
}

Tensor gather_spatial(const Tensor& input, const PermKey& key) {
  require_chw(input, "gather_spatial");
  if (input.dim(1) != key.height() || input.dim(2) != key.width()) {
    raise(ErrorCode::kShape, "key grid " + describe_grid(key) + " does not match feature map " +
                                 std::to_string(input.dim(1)) + "x" + std::to_string(input.dim(2)));
  }
  Tensor out(input.dims());
  const std::size_t plane = key.area();
  const auto map = key.map();
  const auto src = input.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const std::size_t base = c * plane;
    for (std::size_t q = 0; q < plane; ++q) dst[base + q] = src[base + map[q]];
  }
  return out;
}

Tensor add_ref(const Tensor& lhs, const Tensor& rhs) {
  if (lhs.dims() != rhs.dims()) {
    raise(ErrorCode::kShape, "cannot add " + describe_dims(lhs.dims()) + " and " +
                                 describe_dims(rhs.dims()));
  }
  Tensor out = lhs;
  auto data = out.data();
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = lhs[k] + rhs[k];
  return out;
}

Tensor flatten_ref(const Tensor& input) {
  return Tensor({input.size()}, input.values());
}

}  // namespace permnet
