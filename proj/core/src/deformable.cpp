#include "permnet/deformable.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "permnet/error.hpp"

namespace permnet {
namespace {

using Coord = std::ptrdiff_t;

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

bool is_integral(float v) { return std::isfinite(v) && std::floor(v) == v; }

// Where each (output position, tap) reads from. Exact taps hold a linear
// index into one channel plane, or -1 for out of grid; inexact taps keep the
// real coordinate for the bilinear path.
struct TapPlan {
  std::vector<Coord> index;
  std::vector<float> y;
  std::vector<float> x;
  bool exact = true;
};

Coord base_coord(std::size_t out_pos, std::size_t tap, const WindowGeometry& g) {
  return static_cast<Coord>(out_pos * g.stride + tap) - static_cast<Coord>(g.padding);
}

TapPlan plan_taps(const OffsetVolume& offsets, const WindowGeometry& g, std::size_t h,
                  std::size_t w) {
  const std::size_t n = g.kernel;
  const std::size_t count = offsets.out_height() * offsets.out_width() * n * n;
  TapPlan plan;
  plan.index.resize(count);
  plan.exact = offsets.all_integral();
  if (!plan.exact) {
    plan.y.resize(count);
    plan.x.resize(count);
  }
  std::size_t t = 0;
  for (std::size_t i = 0; i < offsets.out_height(); ++i) {
    for (std::size_t j = 0; j < offsets.out_width(); ++j) {
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b, ++t) {
          const Coord by = base_coord(i, a, g);
          const Coord bx = base_coord(j, b, g);
          if (plan.exact) {
            const Coord y = by + static_cast<Coord>(offsets.dy(i, j, a, b));
            const Coord x = bx + static_cast<Coord>(offsets.dx(i, j, a, b));
            const bool inside = y >= 0 && x >= 0 && y < static_cast<Coord>(h) &&
                                x < static_cast<Coord>(w);
            plan.index[t] = inside ? y * static_cast<Coord>(w) + x : -1;
          } else {
            plan.y[t] = static_cast<float>(by) + offsets.dy(i, j, a, b);
            plan.x[t] = static_cast<float>(bx) + offsets.dx(i, j, a, b);
          }
        }
      }
    }
  }
  return plan;
}

void check_offsets(const OffsetVolume& offsets, const WindowGeometry& g, std::size_t h,
                   std::size_t w, const char* op) {
  const std::size_t out_h = g.output_extent(h);
  const std::size_t out_w = g.output_extent(w);
  if (offsets.out_height() != out_h || offsets.out_width() != out_w ||
      offsets.kernel() != g.kernel) {
    raise(ErrorCode::kShape,
          std::string(op) + " offsets are " + std::to_string(offsets.out_height()) + "x" +
              std::to_string(offsets.out_width()) + "x" +
              std::to_string(2 * offsets.kernel() * offsets.kernel()) + ", operator needs " +
              std::to_string(out_h) + "x" + std::to_string(out_w) + "x" +
              std::to_string(2 * g.kernel * g.kernel));
  }
}

OffsetVolume derive_offsets(const PermKey& key_in, const PermKey& key_out,
                            const WindowGeometry& g, const char* op) {
  const std::size_t h = key_in.height();
  const std::size_t w = key_in.width();
  const std::size_t out_h = g.output_extent(h);
  const std::size_t out_w = g.output_extent(w);
  if (key_out.height() != out_h || key_out.width() != out_w) {
    raise(ErrorCode::kShape, std::string(op) + " output key grid " + describe_grid(key_out) +
                                 " does not match output " + std::to_string(out_h) + "x" +
                                 std::to_string(out_w) + " of input grid " +
                                 describe_grid(key_in));
  }
  const PermKey where = invert_key(key_in);
  const std::size_t n = g.kernel;
  OffsetVolume volume(out_h, out_w, n);
  auto values = volume.values();
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t plain = key_out[i * out_w + j];
      const std::size_t u = plain / out_w;
      const std::size_t v = plain % out_w;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          const Coord ty = base_coord(u, a, g);
          const Coord tx = base_coord(v, b, g);
          Coord dest_y = kSentinelCoord;
          Coord dest_x = kSentinelCoord;
          if (ty >= 0 && tx >= 0 && ty < static_cast<Coord>(h) && tx < static_cast<Coord>(w)) {
            const std::size_t shuffled = where[static_cast<std::size_t>(ty) * w +
                                               static_cast<std::size_t>(tx)];
            dest_y = static_cast<Coord>(shuffled / w);
            dest_x = static_cast<Coord>(shuffled % w);
          }
          const std::size_t t = volume.index(i, j, a, b);
          values[t] = static_cast<float>(dest_y - base_coord(i, a, g));
          values[t + 1] = static_cast<float>(dest_x - base_coord(j, b, g));
        }
      }
    }
  }
  return volume;
}

void check_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    raise(ErrorCode::kShape, std::string(op) + " expects C x H x W, got " +
                                 describe_dims(t.dims()));
  }
}

}  // namespace

OffsetVolume::OffsetVolume(std::size_t out_height, std::size_t out_width, std::size_t kernel)
    : OffsetVolume(out_height, out_width, kernel,
                   std::vector<float>(out_height * out_width * 2 * kernel * kernel, 0.0f)) {}

OffsetVolume::OffsetVolume(std::size_t out_height, std::size_t out_width, std::size_t kernel,
                           std::vector<float> values)
    : out_height_(out_height), out_width_(out_width), kernel_(kernel), values_(std::move(values)) {
  if (out_height_ == 0 || out_width_ == 0 || kernel_ == 0) {
    raise(ErrorCode::kShape, "offset volume extents must be positive");
  }
  if (values_.size() != out_height_ * out_width_ * 2 * kernel_ * kernel_) {
    raise(ErrorCode::kShape, "offset volume " + std::to_string(out_height_) + "x" +
                                 std::to_string(out_width_) + "x" +
                                 std::to_string(2 * kernel_ * kernel_) + " cannot hold " +
                                 std::to_string(values_.size()) + " values");
  }
}

bool OffsetVolume::all_integral() const noexcept {
  for (float v : values_) {
    if (!is_integral(v)) return false;
  }
  return true;
}

ChannelView channel_view(const Tensor& t, std::size_t c) {
  return {t.channel(c), t.dim(1), t.dim(2)};
}

ChannelView plane_view(const Tensor& t) {
  if (t.rank() != 2) {
    raise(ErrorCode::kShape, "expected an H x W plane, got " + describe_dims(t.dims()));
  }
  return {t.data(), t.dim(0), t.dim(1)};
}

float bilinear_sample(ChannelView channel, float y, float x, OutOfBounds oob) {
  if (!std::isfinite(y) || !std::isfinite(x)) {
    raise(ErrorCode::kParameter, "sample coordinates must be finite");
  }
  const auto h = static_cast<Coord>(channel.height);
  const auto w = static_cast<Coord>(channel.width);
  auto read = [&](Coord cy, Coord cx, float outside) {
    if (cy < 0 || cx < 0 || cy >= h || cx >= w) return outside;
    return channel.data[static_cast<std::size_t>(cy * w + cx)];
  };
  if (is_integral(y) && is_integral(x)) {
    return read(static_cast<Coord>(y), static_cast<Coord>(x),
                oob == OutOfBounds::kZero ? 0.0f : kNegInf);
  }
  if (oob == OutOfBounds::kNegInf) {
    raise(ErrorCode::kParameter, "fractional sampling is undefined with -inf padding");
  }
  const float fy = std::floor(y);
  const float fx = std::floor(x);
  const auto y0 = static_cast<Coord>(fy);
  const auto x0 = static_cast<Coord>(fx);
  const float wy = y - fy;
  const float wx = x - fx;
  const float top = (1.0f - wx) * read(y0, x0, 0.0f) + wx * read(y0, x0 + 1, 0.0f);
  const float bottom = (1.0f - wx) * read(y0 + 1, x0, 0.0f) + wx * read(y0 + 1, x0 + 1, 0.0f);
  return (1.0f - wy) * top + wy * bottom;
}

OffsetVolume derive_conv_offsets(const PermKey& key_in, const PermKey& key_out,
                                 const ConvParams& params) {
  return derive_offsets(key_in, key_out, params.geometry(), "conv");
}

OffsetVolume derive_pool_offsets(const PermKey& key_in, const PermKey& key_out,
                                 const PoolParams& params) {
  const WindowGeometry g = params.geometry();
  OffsetVolume volume = derive_offsets(key_in, key_out, g, "pool");
  const std::size_t n = g.kernel;
  for (std::size_t i = 0; i < volume.out_height(); ++i) {
    for (std::size_t j = 0; j < volume.out_width(); ++j) {
      bool any_inside = false;
      for (std::size_t a = 0; a < n && !any_inside; ++a) {
        for (std::size_t b = 0; b < n && !any_inside; ++b) {
          const Coord y = base_coord(i, a, g) + static_cast<Coord>(volume.dy(i, j, a, b));
          const Coord x = base_coord(j, b, g) + static_cast<Coord>(volume.dx(i, j, a, b));
          any_inside = !(y == kSentinelCoord && x == kSentinelCoord);
        }
      }
      if (!any_inside) {
        raise(ErrorCode::kParameter, "pool window at output (" + std::to_string(i) + ", " +
                                         std::to_string(j) + ") has no in-grid tap");
      }
    }
  }
  return volume;
}

Tensor deform_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     const OffsetVolume& offsets, const ConvParams& params) {
  check_chw(input, "deform_conv2d");
  const std::size_t c_in = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const std::size_t n = params.kernel;
  const std::size_t c_out = params.out_channels;
  if (c_in != params.in_channels) {
    raise(ErrorCode::kShape, "deform_conv2d expects " + std::to_string(params.in_channels) +
                                 " input channels, input has " + std::to_string(c_in));
  }
  if (weights.dims() != Tensor::Dims{c_out, c_in, n, n}) {
    raise(ErrorCode::kShape, "deform_conv2d weights " + describe_dims(weights.dims()) +
                                 " do not match " +
                                 describe_dims(Tensor::Dims{c_out, c_in, n, n}));
  }
  if (bias.dims() != Tensor::Dims{c_out}) {
    raise(ErrorCode::kShape, "deform_conv2d bias must have " + std::to_string(c_out) +
                                 " entries, got " + describe_dims(bias.dims()));
  }
  const WindowGeometry g = params.geometry();
  check_offsets(offsets, g, h, w, "deform_conv2d");

  const TapPlan plan = plan_taps(offsets, g, h, w);
  const std::size_t out_h = offsets.out_height();
  const std::size_t out_w = offsets.out_width();
  const std::size_t taps = n * n;
  const std::size_t plane = h * w;
  const auto src = input.data();
  Tensor out = Tensor::chw(c_out, out_h, out_w);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t p = 0; p < out_h * out_w; ++p) {
      float acc = bias[o];
      for (std::size_t c = 0; c < c_in; ++c) {
        const float* kernel = weights.data().data() + (o * c_in + c) * taps;
        const std::size_t first = p * taps;
        if (plan.exact) {
          const float* channel = src.data() + c * plane;
          for (std::size_t t = 0; t < taps; ++t) {
            const Coord at = plan.index[first + t];
            const float v = at >= 0 ? channel[at] : 0.0f;
            acc += kernel[t] * v;
          }
        } else {
          const ChannelView view = channel_view(input, c);
          for (std::size_t t = 0; t < taps; ++t) {
            const float v =
                bilinear_sample(view, plan.y[first + t], plan.x[first + t], OutOfBounds::kZero);
            acc += kernel[t] * v;
          }
        }
      }
      out[o * out_h * out_w + p] = acc;
    }
  }
  return out;
}

Tensor deform_maxpool2d(const Tensor& input, const OffsetVolume& offsets,
                        const PoolParams& params) {
  check_chw(input, "deform_maxpool2d");
  const std::size_t channels = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const WindowGeometry g = params.geometry();
  check_offsets(offsets, g, h, w, "deform_maxpool2d");
  if (!offsets.all_integral()) {
    raise(ErrorCode::kParameter, "deform_maxpool2d requires integral offsets");
  }

  const TapPlan plan = plan_taps(offsets, g, h, w);
  const std::size_t positions = offsets.out_height() * offsets.out_width();
  const std::size_t taps = g.kernel * g.kernel;
  const std::size_t plane = h * w;
  const auto src = input.data();
  Tensor out = Tensor::chw(channels, offsets.out_height(), offsets.out_width());
  for (std::size_t c = 0; c < channels; ++c) {
    const float* channel = src.data() + c * plane;
    for (std::size_t p = 0; p < positions; ++p) {
      float best = kNegInf;
      for (std::size_t t = 0; t < taps; ++t) {
        const Coord at = plan.index[p * taps + t];
        const float v = at >= 0 ? channel[at] : kNegInf;
        if (v > best) best = v;
      }
      out[c * positions + p] = best;
    }
  }
  return out;
}

}  // namespace permnet
