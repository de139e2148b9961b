#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "permnet/deformable.hpp"
#include "permnet/model.hpp"
#include "permnet/perm_key.hpp"

namespace permnet {

// A plain model compiled against an acquisition key. Feature maps stay
// shuffled through every spatial stage; each conv/pool reads its input under
// one chain key and writes its output under the next. The map is put back in
// plain order right before the flatten/global_avg_pool head, or after the
// last layer when the model has no head.
struct KeyedModel {
  ModelSpec spec;  // shares weight buffers with the plain model
  KeyChain chain;  // chain.entries[0] is the acquisition key

  // Layer indices of the conv/pool layers, in order. Spatial layer k reads
  // under chain.entries[k] and writes under chain.entries[k + 1] using
  // offsets[k].
  std::vector<std::size_t> spatial_layers;
  std::vector<OffsetVolume> offsets;

  // Chain index each layer's output is shuffled by; empty once the map is
  // back in plain order.
  std::vector<std::optional<std::size_t>> output_key;

  PermKey final_unshuffle;
  // Layer index the unshuffle runs in front of; layers.size() means after the
  // last layer.
  std::size_t unshuffle_at = 0;

  const PermKey& acquisition_key() const { return chain.entries.front(); }

  // Structural checks plus re-derivation of every offset volume from its
  // chain keys. Throws Error(kIntegrity) on any mismatch.
  void validate() const;
};

struct CompileOptions {
  // Test hook: draw identity keys instead of seeded ones.
  bool identity_layer_keys = false;
};

// Walks the layers keeping a current key (initially the acquisition key).
// conv/pool at layer index i draws generate_key(out grid, session_seed ^ i)
// unless its output feeds a residual_add, in which case it adopts the skip
// source's key. Pointwise and residual layers keep the current key.
KeyedModel keyed_compile(const ModelSpec& model, const PermKey& acquisition_key,
                         std::uint64_t session_seed, const CompileOptions& options = {});

ForwardResult keyed_forward(const KeyedModel& keyed, const Tensor& shuffled_input);

struct LayerDiff {
  std::size_t layer = 0;
  float max_abs_diff = 0.0f;
  bool bitwise_equal = true;
};

struct EquivalenceReport {
  // Final output and every per-layer intermediate match bitwise.
  bool bitwise_equal = false;
  float max_abs_diff = 0.0f;  // over the final output
  double relative_l2 = 0.0;   // ||keyed - plain|| / ||plain|| over the final output
  std::vector<LayerDiff> per_layer_diffs;
  std::optional<bool> argmax_equal;  // vector outputs only

  // First layer whose unshuffled keyed intermediate differs bitwise.
  std::optional<std::size_t> first_divergent_layer() const;
};

// Runs the plain path on `input` and the keyed path on shuffle(input,
// acquisition key), unshuffling each keyed intermediate by its chain key.
EquivalenceReport verify_compiled(const ModelSpec& model, const KeyedModel& keyed,
                                  const Tensor& input);

EquivalenceReport verify_equivalence(const ModelSpec& model, const PermKey& acquisition_key,
                                     std::uint64_t session_seed, const Tensor& input);

struct DivergenceScore {
  double mean_relative_l2 = 0.0;
  double argmax_agreement_rate = 0.0;
  std::vector<double> relative_l2;  // per input
};

// Plain outputs versus a model compiled for true_key but fed images shuffled
// with wrong_key.
DivergenceScore divergence_score(const ModelSpec& model, const PermKey& true_key,
                                 const PermKey& wrong_key, std::uint64_t session_seed,
                                 std::span<const Tensor> inputs);

// ||a - b|| / ||b||, falling back to ||a - b|| when b is all zeros.
double relative_l2(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);
// Index of the first maximum over the flattened tensor.
std::size_t argmax(const Tensor& t);

}  // namespace permnet
