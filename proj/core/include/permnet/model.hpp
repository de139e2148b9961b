#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "permnet/deformable.hpp"
#include "permnet/tensor.hpp"

namespace permnet {

using WeightRef = std::shared_ptr<const Tensor>;

struct Conv2dLayer {
  ConvParams params;
  WeightRef weights;  // Cout x Cin x n x n
  WeightRef bias;     // Cout
};

struct MaxPool2dLayer {
  PoolParams params;
};

struct ReluLayer {};

// Inference-time batch norm folded to a per-channel scale and shift.
struct AffineLayer {
  WeightRef scale;
  WeightRef shift;
};

// Adds the output of an earlier layer to the current activation.
struct ResidualAddLayer {
  std::size_t from = 0;
};

struct GlobalAvgPoolLayer {};
struct FlattenLayer {};

struct DenseLayer {
  WeightRef weights;  // K x D
  WeightRef bias;     // K
};

using Layer = std::variant<Conv2dLayer, MaxPool2dLayer, ReluLayer, AffineLayer, ResidualAddLayer,
                           GlobalAvgPoolLayer, FlattenLayer, DenseLayer>;

std::string layer_kind(const Layer& layer);

inline bool is_spatial(const Layer& layer) {
  return std::holds_alternative<Conv2dLayer>(layer) || std::holds_alternative<MaxPool2dLayer>(layer);
}

inline bool is_head_boundary(const Layer& layer) {
  return std::holds_alternative<GlobalAvgPoolLayer>(layer) ||
         std::holds_alternative<FlattenLayer>(layer);
}

// A plain sequential CNN with optional residual skips. Weight tensors are
// shared, so copies of a ModelSpec read the same buffers.
struct ModelSpec {
  Tensor::Dims input_dims;  // C x H x W
  std::vector<Layer> layers;

  // Output dims of every layer. Throws Error(kShape/kParameter) whose message
  // starts with "layer <index> (<kind>)".
  std::vector<Tensor::Dims> layer_output_dims() const;
  void validate() const { (void)layer_output_dims(); }
};

struct ForwardResult {
  Tensor output;
  std::vector<Tensor> intermediates;  // one per layer, captured after it runs
};

ForwardResult plain_forward(const ModelSpec& model, const Tensor& input);

}  // namespace permnet
