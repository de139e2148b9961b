#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "permnet/error.hpp"
#include "permnet/formats.hpp"
#include "permnet/keyed_model.hpp"
#include "permnet/manifest.hpp"
#include "permnet/perceptual.hpp"
#include "permnet/perm_key.hpp"

namespace permnet::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  std::uint64_t session_seed = 0;
  std::string key;
  std::string wrong_key;
  std::string in;
  std::string out;
  std::string model;
  std::string compiled;
  bool logits = false;
};

// Per-pixel argmax over channels for C x H x W outputs, a single class index
// for vectors.
Tensor predictions(const Tensor& output) {
  if (output.rank() != 3) return Tensor({1}, {static_cast<float>(argmax(output))});
  const std::size_t channels = output.dim(0);
  const std::size_t plane = output.dim(1) * output.dim(2);
  Tensor labels = Tensor::chw(1, output.dim(1), output.dim(2));
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < channels; ++c) {
      if (output[c * plane + p] > output[best * plane + p]) best = c;
    }
    labels[p] = static_cast<float>(best);
  }
  return labels;
}

int keygen(const Options& o, std::ostream& out) {
  const PermKey key = generate_key(o.height, o.width, o.seed);
  write_key(o.out, key);
  out << "wrote " << describe_grid(key) << " key to " << o.out << "\n";
  return kExitOk;
}

int encrypt(const Options& o, std::ostream& out) {
  const PermKey key = read_key(o.key);
  write_tensor(o.out, shuffle(read_image(o.in), key));
  out << "encrypted " << o.in << " -> " << o.out << "\n";
  return kExitOk;
}

int decrypt(const Options& o, std::ostream& out) {
  const PermKey key = read_key(o.key);
  write_tensor(o.out, unshuffle(read_tensor(o.in), key));
  out << "decrypted " << o.in << " -> " << o.out << "\n";
  return kExitOk;
}

int compile(const Options& o, std::ostream& out) {
  const ModelSpec model = load_model(o.model);
  const KeyedModel keyed = keyed_compile(model, read_key(o.key), o.session_seed);
  save_compiled(keyed, o.model, o.out);
  out << "compiled " << keyed.spatial_layers.size() << " spatial layers, chain length "
      << keyed.chain.entries.size() << " -> " << o.out << "\n";
  return kExitOk;
}

int infer(const Options& o, std::ostream& out) {
  const KeyedModel keyed = load_compiled(o.compiled);
  const Tensor result = keyed_forward(keyed, read_tensor(o.in)).output;
  if (o.logits) {
    write_tensor(o.out, result);
    out << "wrote output " << describe_dims(result.dims()) << " to " << o.out << "\n";
  } else {
    const Tensor labels = predictions(result);
    write_tensor(o.out, labels);
    if (result.rank() == 1) out << "class " << static_cast<std::size_t>(labels[0]) << "\n";
    else out << "wrote label map " << describe_dims(labels.dims()) << " to " << o.out << "\n";
  }
  return kExitOk;
}

int verify(const Options& o, std::ostream& out) {
  const ModelSpec model = load_model(o.model);
  const PermKey key = read_key(o.key);
  const Tensor input = read_image(o.in);
  const EquivalenceReport report = verify_equivalence(model, key, o.session_seed, input);

  out << std::setprecision(9);
  out << "bitwise_equal: " << (report.bitwise_equal ? "true" : "false") << "\n";
  out << "max_abs_diff: " << report.max_abs_diff << "\n";
  out << "relative_l2: " << report.relative_l2 << "\n";
  if (report.argmax_equal) out << "argmax_equal: " << (*report.argmax_equal ? "true" : "false") << "\n";
  for (const LayerDiff& d : report.per_layer_diffs) {
    out << "layer " << d.layer << " (" << layer_kind(model.layers[d.layer])
        << "): max_abs_diff " << d.max_abs_diff << (d.bitwise_equal ? "" : " MISMATCH") << "\n";
  }
  if (!o.wrong_key.empty()) {
    const PermKey wrong = read_key(o.wrong_key);
    const DivergenceScore score =
        divergence_score(model, key, wrong, o.session_seed, std::span(&input, 1));
    out << "wrong_key_relative_l2: " << score.mean_relative_l2 << "\n";
    out << "wrong_key_argmax_agreement: " << score.argmax_agreement_rate << "\n";
  }
  return report.bitwise_equal ? kExitOk : kExitNotEquivalent;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Keyed inference on pixel-shuffled images", "permnet"};
  app.require_subcommand(1);
  Options o;

  auto* keygen_cmd = app.add_subcommand("keygen", "Generate a permutation key file");
  keygen_cmd->add_option("--height", o.height, "Grid height")->required()->check(CLI::PositiveNumber);
  keygen_cmd->add_option("--width", o.width, "Grid width")->required()->check(CLI::PositiveNumber);
  keygen_cmd->add_option("--seed", o.seed, "Shuffle seed")->required();
  keygen_cmd->add_option("--out", o.out, "Output key file")->required();

  auto* encrypt_cmd = app.add_subcommand("encrypt", "Shuffle an image with a key");
  encrypt_cmd->add_option("--key", o.key, "Key file")->required();
  encrypt_cmd->add_option("--in", o.in, "Input image (.ppm, .pgm or .tnsr)")->required();
  encrypt_cmd->add_option("--out", o.out, "Output tensor file")->required();

  auto* decrypt_cmd = app.add_subcommand("decrypt", "Unshuffle a tensor with a key");
  decrypt_cmd->add_option("--key", o.key, "Key file")->required();
  decrypt_cmd->add_option("--in", o.in, "Shuffled tensor file")->required();
  decrypt_cmd->add_option("--out", o.out, "Output tensor file")->required();

  auto* compile_cmd = app.add_subcommand("compile", "Compile a plain model against a key");
  compile_cmd->add_option("--model", o.model, "Model manifest JSON")->required();
  compile_cmd->add_option("--key", o.key, "Acquisition key file")->required();
  compile_cmd->add_option("--session-seed", o.session_seed, "Seed for per-layer keys")->required();
  compile_cmd->add_option("--out", o.out, "Compiled model JSON")->required();

  auto* infer_cmd = app.add_subcommand("infer", "Run a compiled model on a shuffled tensor");
  infer_cmd->add_option("--compiled", o.compiled, "Compiled model JSON")->required();
  infer_cmd->add_option("--in", o.in, "Shuffled input tensor")->required();
  infer_cmd->add_option("--out", o.out, "Output tensor file")->required();
  infer_cmd->add_flag("--logits", o.logits, "Write raw outputs instead of predictions");

  auto* verify_cmd = app.add_subcommand("verify", "Check keyed inference against plain inference");
  verify_cmd->add_option("--model", o.model, "Model manifest JSON")->required();
  verify_cmd->add_option("--key", o.key, "Acquisition key file")->required();
  verify_cmd->add_option("--session-seed", o.session_seed, "Seed for per-layer keys")->required();
  verify_cmd->add_option("--in", o.in, "Plain input image (.ppm, .pgm or .tnsr)")->required();
  verify_cmd->add_option("--wrong-key", o.wrong_key, "Also score a wrong key");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*keygen_cmd) return keygen(o, out);
    if (*encrypt_cmd) return encrypt(o, out);
    if (*decrypt_cmd) return decrypt(o, out);
    if (*compile_cmd) return compile(o, out);
    if (*infer_cmd) return infer(o, out);
    if (*verify_cmd) return verify(o, out);
  } catch (const Error& e) {
    err << "error[" << to_string(e.code()) << "]: " << e.message() << "\n";
    return kExitFormat;
  }
  return kExitUsage;
}

}  // namespace permnet::cli
