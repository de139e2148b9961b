#pragma once

#include <cstdint>
#include <filesystem>

#include "permnet/keyed_model.hpp"
#include "permnet/model.hpp"

namespace permnet {

// Model manifest: a JSON document next to a raw little-endian f32 blob.
//
//   {
//     "format": "permnet.model", "version": 1,
//     "input_dims": [C, H, W],
//     "weights_file": "model.bin",
//     "layers": [
//       {"type": "conv2d", "kernel": 3, "stride": 1, "padding": 1,
//        "in_channels": 3, "out_channels": 8,
//        "weights": {"blob_offset": 0, "shape": [8, 3, 3, 3]},
//        "bias": {"blob_offset": 864, "shape": [8]}},
//       {"type": "maxpool2d", "window": 2, "stride": 2, "padding": 0},
//       {"type": "relu"},
//       {"type": "affine", "scale": {...}, "shift": {...}},
//       {"type": "residual_add", "from": 2},
//       {"type": "global_avg_pool"} | {"type": "flatten"},
//       {"type": "dense", "weights": {...}, "bias": {...}}
//     ]
//   }
//
// blob_offset is in bytes, 4-aligned. References must be in bounds and must
// not overlap. weights_file is resolved relative to the manifest. Unknown
// top-level members (e.g. "metadata") are ignored.
ModelSpec load_model(const std::filesystem::path& manifest_path);

// Writes the manifest and its blob (tensors packed in layer order).
void save_model(const ModelSpec& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path);

// FNV-1a over input dims and every weight tensor's bytes, in layer order.
std::uint64_t weights_digest(const ModelSpec& model);

// Compiled model: JSON naming the plain manifest plus the key chain and
// offset volumes. It carries the acquisition key and must be kept as secret
// as the key file.
void save_compiled(const KeyedModel& keyed, const std::filesystem::path& model_manifest,
                   const std::filesystem::path& out_path);

// Loads the referenced manifest, checks the weight digest, and re-derives
// every offset volume against the stored chain before returning.
KeyedModel load_compiled(const std::filesystem::path& compiled_path);

}  // namespace permnet
