#include "permnet/model.hpp"

#include <string>

#include "overloaded.hpp"
#include "permnet/error.hpp"
#include "permnet/reference_ops.hpp"

namespace permnet {
namespace {

using detail::Overloaded;

const Tensor& deref(const WeightRef& ref, std::size_t index, const char* what) {
  if (!ref) {
    raise(ErrorCode::kShape, "layer " + std::to_string(index) + " is missing its " + what);
  }
  return *ref;
}

}  // namespace

std::string layer_kind(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2dLayer&) { return "conv2d"; },
                        [](const MaxPool2dLayer&) { return "maxpool2d"; },
                        [](const ReluLayer&) { return "relu"; },
                        [](const AffineLayer&) { return "affine"; },
                        [](const ResidualAddLayer&) { return "residual_add"; },
                        [](const GlobalAvgPoolLayer&) { return "global_avg_pool"; },
                        [](const FlattenLayer&) { return "flatten"; },
                        [](const DenseLayer&) { return "dense"; },
                    },
                    layer);
}

std::vector<Tensor::Dims> ModelSpec::layer_output_dims() const {
  if (input_dims.size() != 3 || input_dims[0] == 0 || input_dims[1] == 0 || input_dims[2] == 0) {
    raise(ErrorCode::kShape, "model input must be C x H x W, got " + describe_dims(input_dims));
  }
  std::vector<Tensor::Dims> out;
  out.reserve(layers.size());
  Tensor::Dims cur = input_dims;
  bool head_seen = false;

  for (std::size_t index = 0; index < layers.size(); ++index) {
    const Layer& layer = layers[index];
    const std::string where = "layer " + std::to_string(index) + " (" + layer_kind(layer) + "): ";
    auto fail = [&](const std::string& why) { raise(ErrorCode::kShape, where + why); };
    auto need_spatial = [&] {
      if (cur.size() != 3) fail("needs a C x H x W input, got " + describe_dims(cur));
      if (head_seen) fail("spatial layer after the flatten/global_avg_pool head");
    };
    auto window_extent = [&](const WindowGeometry& g, std::size_t extent) {
      try {
        return g.output_extent(extent);
      } catch (const Error& e) {
        raise(e.code(), where + e.message());
      }
    };

    std::visit(
        Overloaded{
            [&](const Conv2dLayer& l) {
              need_spatial();
              const Tensor& w = deref(l.weights, index, "weights");
              const Tensor& b = deref(l.bias, index, "bias");
              const ConvParams& p = l.params;
              if (p.in_channels != cur[0]) {
                fail("expects " + std::to_string(p.in_channels) + " input channels, got " +
                     std::to_string(cur[0]));
              }
              const Tensor::Dims want{p.out_channels, p.in_channels, p.kernel, p.kernel};
              if (w.dims() != want) {
                fail("weights are " + describe_dims(w.dims()) + ", expected " +
                     describe_dims(want));
              }
              if (b.dims() != Tensor::Dims{p.out_channels}) {
                fail("bias is " + describe_dims(b.dims()) + ", expected " +
                     std::to_string(p.out_channels));
              }
              cur = {p.out_channels, window_extent(p.geometry(), cur[1]),
                     window_extent(p.geometry(), cur[2])};
            },
            [&](const MaxPool2dLayer& l) {
              need_spatial();
              cur = {cur[0], window_extent(l.params.geometry(), cur[1]),
                     window_extent(l.params.geometry(), cur[2])};
            },
            [&](const ReluLayer&) {},
            [&](const AffineLayer& l) {
              const Tensor& s = deref(l.scale, index, "scale");
              const Tensor& t = deref(l.shift, index, "shift");
              if (s.dims() != Tensor::Dims{cur[0]} || t.dims() != Tensor::Dims{cur[0]}) {
                fail("scale/shift must have " + std::to_string(cur[0]) + " entries");
              }
            },
            [&](const ResidualAddLayer& l) {
              if (l.from >= index) {
                fail("skip source " + std::to_string(l.from) + " is not an earlier layer");
              }
              if (out[l.from] != cur) {
                fail("skip source dims " + describe_dims(out[l.from]) +
                     " differ from current dims " + describe_dims(cur));
              }
            },
            [&](const GlobalAvgPoolLayer&) {
              if (head_seen) fail("at most one flatten/global_avg_pool is allowed");
              need_spatial();
              head_seen = true;
              cur = {cur[0]};
            },
            [&](const FlattenLayer&) {
              if (head_seen) fail("at most one flatten/global_avg_pool is allowed");
              need_spatial();
              head_seen = true;
              cur = {cur[0] * cur[1] * cur[2]};
            },
            [&](const DenseLayer& l) {
              if (cur.size() != 1) fail("needs a vector input, got " + describe_dims(cur));
              const Tensor& w = deref(l.weights, index, "weights");
              const Tensor& b = deref(l.bias, index, "bias");
              if (w.rank() != 2 || w.dim(1) != cur[0]) {
                fail("weights " + describe_dims(w.dims()) + " do not accept length " +
                     std::to_string(cur[0]));
              }
              if (b.dims() != Tensor::Dims{w.dim(0)}) {
                fail("bias is " + describe_dims(b.dims()) + ", expected " +
                     std::to_string(w.dim(0)));
              }
              cur = {w.dim(0)};
            },
        },
        layer);
    out.push_back(cur);
  }
  return out;
}

ForwardResult plain_forward(const ModelSpec& model, const Tensor& input) {
  model.validate();
  if (input.dims() != model.input_dims) {
    raise(ErrorCode::kShape, "input is " + describe_dims(input.dims()) + ", model expects " +
                                 describe_dims(model.input_dims));
  }
  ForwardResult result;
  result.intermediates.reserve(model.layers.size());
  Tensor x = input;
  for (const Layer& layer : model.layers) {
    x = std::visit(
        Overloaded{
            [&](const Conv2dLayer& l) {
              return conv2d_ref(x, *l.weights, *l.bias, l.params.stride, l.params.padding);
            },
            [&](const MaxPool2dLayer& l) {
              return maxpool2d_ref(x, l.params.window, l.params.stride, l.params.padding);
            },
            [&](const ReluLayer&) { return relu_ref(x); },
            [&](const AffineLayer& l) { return affine_ref(x, *l.scale, *l.shift); },
            [&](const ResidualAddLayer& l) { return add_ref(x, result.intermediates[l.from]); },
            [&](const GlobalAvgPoolLayer&) { return gap_ref(x); },
            [&](const FlattenLayer&) { return flatten_ref(x); },
            [&](const DenseLayer& l) { return dense_ref(x, *l.weights, *l.bias); },
        },
        layer);
    result.intermediates.push_back(x);
  }
  result.output = std::move(x);
  return result;
}

}  // namespace permnet
