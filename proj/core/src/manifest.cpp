#include "permnet/manifest.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "overloaded.hpp"
#include "permnet/error.hpp"
#include "permnet/formats.hpp"

namespace permnet {
namespace {

using detail::Overloaded;
using nlohmann::json;

constexpr const char* kModelFormat = "permnet.model";
constexpr const char* kCompiledFormat = "permnet.compiled";

struct BlobRange {
  std::size_t begin;
  std::size_t end;
  std::size_t layer;
};

class BlobReader {
 public:
  explicit BlobReader(std::vector<std::uint8_t> blob) : blob_(std::move(blob)) {}

  WeightRef take(const json& ref, std::size_t layer, const char* field) {
    const std::string where = "layer " + std::to_string(layer) + " " + field;
    if (!ref.is_object() || !ref.contains("blob_offset") || !ref.contains("shape")) {
      raise(ErrorCode::kFormat, where + " needs {blob_offset, shape}");
    }
    const auto offset = ref.at("blob_offset").get<std::uint64_t>();
    const auto shape = ref.at("shape").get<std::vector<std::size_t>>();
    if (shape.empty() || shape.size() > 4) {
      raise(ErrorCode::kFormat, where + " has rank " + std::to_string(shape.size()));
    }
    std::uint64_t count = 1;
    for (std::size_t d : shape) {
      if (d == 0) raise(ErrorCode::kFormat, where + " has a zero extent");
      count *= d;
    }
    if (offset % 4 != 0) raise(ErrorCode::kIntegrity, where + " blob_offset is not 4-aligned");
    if (offset > blob_.size() || count * 4 > blob_.size() - offset) {
      raise(ErrorCode::kIntegrity, where + " is a dangling blob reference [" +
                                       std::to_string(offset) + ", " +
                                       std::to_string(offset + count * 4) + ") past blob size " +
                                       std::to_string(blob_.size()));
    }
    ranges_.push_back({static_cast<std::size_t>(offset),
                       static_cast<std::size_t>(offset + count * 4), layer});
    std::vector<float> values(count);
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) {
        bits = (bits << 8) | blob_[offset + 4 * k + static_cast<std::size_t>(b)];
      }
      values[k] = std::bit_cast<float>(bits);
    }
    auto tensor = std::make_shared<const Tensor>(shape, std::move(values));
    if (!tensor->all_finite()) raise(ErrorCode::kIntegrity, where + " holds non-finite values");
    return tensor;
  }

  void check_disjoint() {
    std::sort(ranges_.begin(), ranges_.end(),
              [](const BlobRange& a, const BlobRange& b) { return a.begin < b.begin; });
    for (std::size_t k = 1; k < ranges_.size(); ++k) {
      if (ranges_[k].begin < ranges_[k - 1].end) {
        raise(ErrorCode::kIntegrity, "blob references of layers " +
                                         std::to_string(ranges_[k - 1].layer) + " and " +
                                         std::to_string(ranges_[k].layer) + " overlap");
      }
    }
  }

 private:
  std::vector<std::uint8_t> blob_;
  std::vector<BlobRange> ranges_;
};

std::size_t field(const json& layer, const char* name, std::size_t index) {
  if (!layer.contains(name) || !layer.at(name).is_number_unsigned()) {
    raise(ErrorCode::kFormat, "layer " + std::to_string(index) + " needs a non-negative integer '" +
                                  name + "'");
  }
  return layer.at(name).get<std::size_t>();
}

Layer parse_layer(const json& j, std::size_t index, BlobReader& blob) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    raise(ErrorCode::kFormat, "layer " + std::to_string(index) + " has no type");
  }
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    Conv2dLayer l;
    l.params.kernel = field(j, "kernel", index);
    l.params.stride = field(j, "stride", index);
    l.params.padding = field(j, "padding", index);
    l.params.in_channels = field(j, "in_channels", index);
    l.params.out_channels = field(j, "out_channels", index);
    l.weights = blob.take(j.value("weights", json()), index, "weights");
    l.bias = blob.take(j.value("bias", json()), index, "bias");
    return l;
  }
  if (type == "maxpool2d") {
    return MaxPool2dLayer{{field(j, "window", index), field(j, "stride", index),
                           field(j, "padding", index)}};
  }
  if (type == "relu") return ReluLayer{};
  if (type == "affine") {
    return AffineLayer{blob.take(j.value("scale", json()), index, "scale"),
                       blob.take(j.value("shift", json()), index, "shift")};
  }
  if (type == "residual_add") return ResidualAddLayer{field(j, "from", index)};
  if (type == "global_avg_pool") return GlobalAvgPoolLayer{};
  if (type == "flatten") return FlattenLayer{};
  if (type == "dense") {
    return DenseLayer{blob.take(j.value("weights", json()), index, "weights"),
                      blob.take(j.value("bias", json()), index, "bias")};
  }
  raise(ErrorCode::kFormat, "layer " + std::to_string(index) + " has unsupported type '" + type +
                                "'");
}

json parse_json_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    raise(ErrorCode::kFormat, path.string() + " is not a JSON object");
  }
  return doc;
}

void check_header(const json& doc, const char* format, const std::filesystem::path& path) {
  if (doc.value("format", std::string()) != format) {
    raise(ErrorCode::kFormat, path.string() + " is not a " + format + " document");
  }
  if (doc.value("version", 0) != 1) {
    raise(ErrorCode::kFormat, path.string() + " has unsupported version");
  }
}

// Reads any JSON error out as a format error so callers see one error type.
template <class F>
auto guarded(const std::filesystem::path& path, F&& body) {
  try {
    return body();
  } catch (const json::exception& e) {
    raise(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

class BlobWriter {
 public:
  json put(const WeightRef& tensor) {
    json ref{{"blob_offset", bytes_.size()}, {"shape", tensor->dims()}};
    for (float v : tensor->data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int shift = 0; shift < 32; shift += 8) {
        bytes_.push_back(static_cast<std::uint8_t>(bits >> shift));
      }
    }
    return ref;
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

void write_json(const std::filesystem::path& path, const json& doc) {
  const std::string text = doc.dump(1) + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

}  // namespace

ModelSpec load_model(const std::filesystem::path& manifest_path) {
  return guarded(manifest_path, [&] {
    const json doc = parse_json_file(manifest_path);
    check_header(doc, kModelFormat, manifest_path);
    ModelSpec model;
    model.input_dims = doc.at("input_dims").get<std::vector<std::size_t>>();
    const std::filesystem::path blob_path =
        manifest_path.parent_path() / doc.at("weights_file").get<std::string>();
    BlobReader blob(read_file(blob_path));
    const json& layers = doc.at("layers");
    if (!layers.is_array()) raise(ErrorCode::kFormat, "'layers' must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      model.layers.push_back(parse_layer(layers[i], i, blob));
    }
    blob.check_disjoint();
    model.validate();
    return model;
  });
}

void save_model(const ModelSpec& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path) {
  model.validate();
  BlobWriter blob;
  json layers = json::array();
  for (const Layer& layer : model.layers) {
    json j{{"type", layer_kind(layer)}};
    std::visit(Overloaded{
                   [&](const Conv2dLayer& l) {
                     j["kernel"] = l.params.kernel;
                     j["stride"] = l.params.stride;
                     j["padding"] = l.params.padding;
                     j["in_channels"] = l.params.in_channels;
                     j["out_channels"] = l.params.out_channels;
                     j["weights"] = blob.put(l.weights);
                     j["bias"] = blob.put(l.bias);
                   },
                   [&](const MaxPool2dLayer& l) {
                     j["window"] = l.params.window;
                     j["stride"] = l.params.stride;
                     j["padding"] = l.params.padding;
                   },
                   [&](const AffineLayer& l) {
                     j["scale"] = blob.put(l.scale);
                     j["shift"] = blob.put(l.shift);
                   },
                   [&](const ResidualAddLayer& l) { j["from"] = l.from; },
                   [&](const DenseLayer& l) {
                     j["weights"] = blob.put(l.weights);
                     j["bias"] = blob.put(l.bias);
                   },
                   [](const auto&) {},
               },
               layer);
    layers.push_back(std::move(j));
  }
  const json doc{{"format", kModelFormat},
                 {"version", 1},
                 {"input_dims", model.input_dims},
                 {"weights_file", blob_path.filename().string()},
                 {"layers", std::move(layers)}};
  write_file_atomic(blob_path, blob.bytes());
  write_json(manifest_path, doc);
}

std::uint64_t weights_digest(const ModelSpec& model) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t word) {
    for (int shift = 0; shift < 64; shift += 8) {
      hash ^= (word >> shift) & 0xff;
      hash *= 0x100000001b3ULL;
    }
  };
  auto mix_tensor = [&](const WeightRef& t) {
    for (std::size_t d : t->dims()) mix(d);
    for (float v : t->data()) mix(std::bit_cast<std::uint32_t>(v));
  };
  for (std::size_t d : model.input_dims) mix(d);
  for (const Layer& layer : model.layers) {
    std::visit(Overloaded{
                   [&](const Conv2dLayer& l) {
                     mix_tensor(l.weights);
                     mix_tensor(l.bias);
                   },
                   [&](const AffineLayer& l) {
                     mix_tensor(l.scale);
                     mix_tensor(l.shift);
                   },
                   [&](const DenseLayer& l) {
                     mix_tensor(l.weights);
                     mix_tensor(l.bias);
                   },
                   [&](const ResidualAddLayer& l) { mix(l.from); },
                   [&](const MaxPool2dLayer& l) {
                     mix(l.params.window);
                     mix(l.params.stride);
                     mix(l.params.padding);
                   },
                   [&](const auto&) {},
               },
               layer);
    mix(layer.index());
  }
  return hash;
}

void save_compiled(const KeyedModel& keyed, const std::filesystem::path& model_manifest,
                   const std::filesystem::path& out_path) {
  keyed.validate();
  json chain = json::array();
  for (const PermKey& key : keyed.chain.entries) {
    chain.push_back({{"height", key.height()},
                     {"width", key.width()},
                     {"map", std::vector<std::uint32_t>(key.map().begin(), key.map().end())}});
  }
  json offsets = json::array();
  for (const OffsetVolume& volume : keyed.offsets) {
    std::vector<std::int64_t> ints(volume.values().size());
    std::transform(volume.values().begin(), volume.values().end(), ints.begin(),
                   [](float v) { return static_cast<std::int64_t>(v); });
    offsets.push_back(std::move(ints));
  }
  json output_key = json::array();
  for (const auto& k : keyed.output_key) output_key.push_back(k ? json(*k) : json(nullptr));

  std::filesystem::path model_ref = std::filesystem::absolute(model_manifest);
  const std::filesystem::path base = std::filesystem::absolute(out_path).parent_path();
  std::error_code ec;
  const std::filesystem::path relative = std::filesystem::relative(model_ref, base, ec);
  if (!ec && !relative.empty()) model_ref = relative;

  std::size_t final_index = 0;
  for (std::size_t k = 0; k < keyed.chain.entries.size(); ++k) {
    if (keyed.chain.entries[k] == keyed.final_unshuffle) final_index = k;
  }
  const json doc{{"format", kCompiledFormat},
                 {"version", 1},
                 {"model", model_ref.generic_string()},
                 {"weights_digest", weights_digest(keyed.spec)},
                 {"session_seed", keyed.chain.session_seed},
                 {"chain", std::move(chain)},
                 {"spatial_layers", keyed.spatial_layers},
                 {"offsets", std::move(offsets)},
                 {"output_key", std::move(output_key)},
                 {"final_unshuffle", final_index},
                 {"unshuffle_at", keyed.unshuffle_at}};
  write_json(out_path, doc);
}

KeyedModel load_compiled(const std::filesystem::path& compiled_path) {
  return guarded(compiled_path, [&] {
    const json doc = parse_json_file(compiled_path);
    check_header(doc, kCompiledFormat, compiled_path);
    KeyedModel keyed;
    std::filesystem::path model_ref = doc.at("model").get<std::string>();
    if (model_ref.is_relative()) model_ref = compiled_path.parent_path() / model_ref;
    keyed.spec = load_model(model_ref);
    if (weights_digest(keyed.spec) != doc.at("weights_digest").get<std::uint64_t>()) {
      raise(ErrorCode::kIntegrity, "model at " + model_ref.string() +
                                       " changed since it was compiled");
    }
    keyed.chain.session_seed = doc.at("session_seed").get<std::uint64_t>();
    for (const json& entry : doc.at("chain")) {
      keyed.chain.entries.emplace_back(entry.at("height").get<std::size_t>(),
                                       entry.at("width").get<std::size_t>(),
                                       entry.at("map").get<std::vector<std::uint32_t>>());
    }
    keyed.spatial_layers = doc.at("spatial_layers").get<std::vector<std::size_t>>();
    const auto dims = keyed.spec.layer_output_dims();
    const json& offsets = doc.at("offsets");
    if (offsets.size() != keyed.spatial_layers.size()) {
      raise(ErrorCode::kIntegrity, "offset volume count disagrees with spatial layer count");
    }
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const std::size_t layer = keyed.spatial_layers[k];
      if (layer >= dims.size() || !is_spatial(keyed.spec.layers[layer])) {
        raise(ErrorCode::kIntegrity, "spatial layer index " + std::to_string(layer) + " is invalid");
      }
      const auto* conv = std::get_if<Conv2dLayer>(&keyed.spec.layers[layer]);
      const std::size_t n = conv ? conv->params.kernel
                                 : std::get<MaxPool2dLayer>(keyed.spec.layers[layer]).params.window;
      const auto ints = offsets[k].get<std::vector<std::int64_t>>();
      std::vector<float> values(ints.begin(), ints.end());
      keyed.offsets.emplace_back(dims[layer][1], dims[layer][2], n, std::move(values));
    }
    for (const json& k : doc.at("output_key")) {
      keyed.output_key.push_back(k.is_null() ? std::nullopt
                                             : std::optional<std::size_t>(k.get<std::size_t>()));
    }
    const auto final_index = doc.at("final_unshuffle").get<std::size_t>();
    if (final_index >= keyed.chain.entries.size()) {
      raise(ErrorCode::kIntegrity, "final_unshuffle names a missing chain entry");
    }
    keyed.final_unshuffle = keyed.chain.entries[final_index];
    keyed.unshuffle_at = doc.at("unshuffle_at").get<std::size_t>();
    for (const auto& k : keyed.output_key) {
      if (k && *k >= keyed.chain.entries.size()) {
        raise(ErrorCode::kIntegrity, "output key names a missing chain entry");
      }
    }
    keyed.validate();
    return keyed;
  });
}

}  // namespace permnet
