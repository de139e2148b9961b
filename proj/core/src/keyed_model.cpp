#include "permnet/keyed_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "overloaded.hpp"
#include "permnet/error.hpp"
#include "permnet/perceptual.hpp"
#include "permnet/reference_ops.hpp"

namespace permnet {
namespace {

using detail::Overloaded;

OffsetVolume derive_for(const Layer& layer, const PermKey& in, const PermKey& out) {
  if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
    return derive_conv_offsets(in, out, conv->params);
  }
  return derive_pool_offsets(in, out, std::get<MaxPool2dLayer>(layer).params);
}

// For every residual_add, the last conv/pool strictly between its skip source
// and itself must emit under the skip source's key.
std::vector<std::vector<std::size_t>> residual_constraints(const ModelSpec& model) {
  std::vector<std::vector<std::size_t>> forced(model.layers.size());
  for (std::size_t r = 0; r < model.layers.size(); ++r) {
    const auto* add = std::get_if<ResidualAddLayer>(&model.layers[r]);
    if (add == nullptr) continue;
    for (std::size_t s = r; s-- > add->from + 1;) {
      if (is_spatial(model.layers[s])) {
        forced[s].push_back(add->from);
        break;
      }
    }
  }
  return forced;
}

}  // namespace

KeyedModel keyed_compile(const ModelSpec& model, const PermKey& acquisition_key,
                         std::uint64_t session_seed, const CompileOptions& options) {
  const std::vector<Tensor::Dims> dims = model.layer_output_dims();
  if (acquisition_key.height() != model.input_dims[1] ||
      acquisition_key.width() != model.input_dims[2]) {
    raise(ErrorCode::kShape, "acquisition key grid " + describe_grid(acquisition_key) +
                                 " does not match model input " +
                                 describe_dims(model.input_dims));
  }

  KeyedModel keyed;
  keyed.spec = model;
  keyed.chain.session_seed = session_seed;
  keyed.chain.entries.push_back(acquisition_key);
  keyed.output_key.resize(model.layers.size());
  keyed.unshuffle_at = model.layers.size();

  const auto forced = residual_constraints(model);
  std::optional<std::size_t> current = 0;

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    if (is_spatial(layer)) {
      const std::size_t out_h = dims[i][1];
      const std::size_t out_w = dims[i][2];
      std::optional<PermKey> next;
      for (std::size_t from : forced[i]) {
        const PermKey& skip_key = keyed.chain.entries[*keyed.output_key[from]];
        if (next && *next != skip_key) {
          raise(ErrorCode::kReconcile,
                "layer " + std::to_string(i) +
                    " feeds residual adds whose skip sources carry different keys");
        }
        next = skip_key;
      }
      if (!next) {
        next = options.identity_layer_keys ? PermKey::identity(out_h, out_w)
                                           : generate_key(out_h, out_w, session_seed ^ i);
      }
      keyed.offsets.push_back(derive_for(layer, keyed.chain.entries[*current], *next));
      keyed.spatial_layers.push_back(i);
      keyed.chain.entries.push_back(std::move(*next));
      current = keyed.chain.entries.size() - 1;
    } else if (is_head_boundary(layer)) {
      keyed.final_unshuffle = keyed.chain.entries[*current];
      keyed.unshuffle_at = i;
      current.reset();
    } else if (const auto* add = std::get_if<ResidualAddLayer>(&layer)) {
      const auto& skip = keyed.output_key[add->from];
      const bool both_plain = !skip && !current;
      const bool same_key = skip && current &&
                            keyed.chain.entries[*skip] == keyed.chain.entries[*current];
      if (!both_plain && !same_key) {
        raise(ErrorCode::kReconcile, "layer " + std::to_string(i) +
                                         " adds feature maps shuffled by different keys");
      }
    }
    keyed.output_key[i] = current;
  }
  if (keyed.unshuffle_at == model.layers.size()) {
    keyed.final_unshuffle = keyed.chain.entries[*current];
  }
  return keyed;
}

void KeyedModel::validate() const {
  const std::vector<Tensor::Dims> dims = spec.layer_output_dims();
  auto fail = [](const std::string& why) { raise(ErrorCode::kIntegrity, why); };
  if (chain.entries.empty()) fail("key chain is empty");
  if (acquisition_key().height() != spec.input_dims[1] ||
      acquisition_key().width() != spec.input_dims[2]) {
    fail("acquisition key grid " + describe_grid(acquisition_key()) + " does not match input " +
         describe_dims(spec.input_dims));
  }
  if (output_key.size() != spec.layers.size()) fail("output key table has the wrong length");
  if (spatial_layers.size() != offsets.size() || chain.entries.size() != offsets.size() + 1) {
    fail("chain has " + std::to_string(chain.entries.size()) + " keys for " +
         std::to_string(offsets.size()) + " offset volumes");
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!is_spatial(spec.layers[i])) continue;
    if (k >= spatial_layers.size() || spatial_layers[k] != i) {
      fail("spatial layer table disagrees with layer " + std::to_string(i));
    }
    const PermKey& out = chain.entries[k + 1];
    if (out.height() != dims[i][1] || out.width() != dims[i][2]) {
      fail("chain key " + std::to_string(k + 1) + " grid " + describe_grid(out) +
           " does not match layer " + std::to_string(i) + " output");
    }
    if (derive_for(spec.layers[i], chain.entries[k], out) != offsets[k]) {
      fail("offset volume for layer " + std::to_string(i) + " does not match its chain keys");
    }
    ++k;
  }
  if (unshuffle_at > spec.layers.size()) fail("unshuffle position out of range");
  if (unshuffle_at < spec.layers.size() && !is_head_boundary(spec.layers[unshuffle_at])) {
    fail("unshuffle must precede a flatten/global_avg_pool layer");
  }
}

ForwardResult keyed_forward(const KeyedModel& keyed, const Tensor& shuffled_input) {
  const ModelSpec& model = keyed.spec;
  if (shuffled_input.dims() != model.input_dims) {
    raise(ErrorCode::kShape, "input is " + describe_dims(shuffled_input.dims()) +
                                 ", model expects " + describe_dims(model.input_dims));
  }
  ForwardResult result;
  result.intermediates.reserve(model.layers.size());
  Tensor x = shuffled_input;
  std::size_t k = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (i == keyed.unshuffle_at) x = unshuffle(x, keyed.final_unshuffle);
    x = std::visit(
        Overloaded{
            [&](const Conv2dLayer& l) {
              return deform_conv2d(x, *l.weights, *l.bias, keyed.offsets.at(k++), l.params);
            },
            [&](const MaxPool2dLayer& l) {
              return deform_maxpool2d(x, keyed.offsets.at(k++), l.params);
            },
            [&](const ReluLayer&) { return relu_ref(x); },
            [&](const AffineLayer& l) { return affine_ref(x, *l.scale, *l.shift); },
            [&](const ResidualAddLayer& l) { return add_ref(x, result.intermediates[l.from]); },
            [&](const GlobalAvgPoolLayer&) { return gap_ref(x); },
            [&](const FlattenLayer&) { return flatten_ref(x); },
            [&](const DenseLayer& l) { return dense_ref(x, *l.weights, *l.bias); },
        },
        model.layers[i]);
    result.intermediates.push_back(x);
  }
  if (keyed.unshuffle_at == model.layers.size()) x = unshuffle(x, keyed.final_unshuffle);
  result.output = std::move(x);
  return result;
}

double relative_l2(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    raise(ErrorCode::kShape, "cannot compare " + describe_dims(a.dims()) + " with " +
                                 describe_dims(b.dims()));
  }
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    diff += d * d;
    ref += static_cast<double>(b[k]) * static_cast<double>(b[k]);
  }
  return ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    raise(ErrorCode::kShape, "cannot compare " + describe_dims(a.dims()) + " with " +
                                 describe_dims(b.dims()));
  }
  float worst = 0.0f;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::fabs(a[k] - b[k]));
  return worst;
}

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (t[k] > t[best]) best = k;
  }
  return best;
}

std::optional<std::size_t> EquivalenceReport::first_divergent_layer() const {
  for (const LayerDiff& d : per_layer_diffs) {
    if (!d.bitwise_equal) return d.layer;
  }
  return std::nullopt;
}

EquivalenceReport verify_compiled(const ModelSpec& model, const KeyedModel& keyed,
                                  const Tensor& input) {
  const ForwardResult plain = plain_forward(model, input);
  const ForwardResult secret = keyed_forward(keyed, shuffle(input, keyed.acquisition_key()));

  EquivalenceReport report;
  bool layers_equal = true;
  for (std::size_t i = 0; i < plain.intermediates.size(); ++i) {
    const Tensor& mine = secret.intermediates[i];
    const auto& key = keyed.output_key[i];
    const Tensor restored = key ? unshuffle(mine, keyed.chain.entries[*key]) : mine;
    LayerDiff diff{i, max_abs_diff(restored, plain.intermediates[i]),
                   restored.bitwise_equal(plain.intermediates[i])};
    layers_equal = layers_equal && diff.bitwise_equal;
    report.per_layer_diffs.push_back(diff);
  }
  report.max_abs_diff = max_abs_diff(secret.output, plain.output);
  report.relative_l2 = relative_l2(secret.output, plain.output);
  report.bitwise_equal = layers_equal && secret.output.bitwise_equal(plain.output);
  if (plain.output.rank() == 1) report.argmax_equal = argmax(secret.output) == argmax(plain.output);
  return report;
}

EquivalenceReport verify_equivalence(const ModelSpec& model, const PermKey& acquisition_key,
                                     std::uint64_t session_seed, const Tensor& input) {
  return verify_compiled(model, keyed_compile(model, acquisition_key, session_seed), input);
}

DivergenceScore divergence_score(const ModelSpec& model, const PermKey& true_key,
                                 const PermKey& wrong_key, std::uint64_t session_seed,
                                 std::span<const Tensor> inputs) {
  if (!true_key.same_grid(wrong_key)) {
    raise(ErrorCode::kShape, "wrong key grid " + describe_grid(wrong_key) +
                                 " does not match true key grid " + describe_grid(true_key));
  }
  const KeyedModel keyed = keyed_compile(model, true_key, session_seed);
  DivergenceScore score;
  std::size_t agree = 0;
  for (const Tensor& x : inputs) {
    const Tensor plain = plain_forward(model, x).output;
    const Tensor attacked = keyed_forward(keyed, shuffle(x, wrong_key)).output;
    score.relative_l2.push_back(relative_l2(attacked, plain));
    if (argmax(attacked) == argmax(plain)) ++agree;
  }
  if (!inputs.empty()) {
    double total = 0.0;
    for (double r : score.relative_l2) total += r;
    score.mean_relative_l2 = total / static_cast<double>(inputs.size());
    score.argmax_agreement_rate =
        static_cast<double>(agree) / static_cast<double>(inputs.size());
  }
  return score;
}

}  // namespace permnet
