#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "permnet/perm_key.hpp"
#include "permnet/tensor.hpp"

namespace permnet {

// Key file, all integers little-endian:
//   "PKEY" | u8 version=1 | u32 height | u32 width | height*width x u32 source index
// The payload must be a bijection. Sealing the file (AES, RSA, ...) would wrap
// these bytes and is left to the caller.
inline constexpr std::size_t kKeyHeaderBytes = 13;

// Tensor file:
//   "TNSR" | u8 version=1 | u8 rank (1..4) | rank x u32 dim | f32 values, row-major
inline constexpr std::size_t kTensorPreambleBytes = 6;

std::vector<std::uint8_t> encode_key(const PermKey& key);
PermKey decode_key(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

// Binary PPM (P6) or PGM (P5) with maxval <= 255, imported as a 3- or
// 1-channel C x H x W tensor with samples divided by maxval.
Tensor decode_netpbm(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a sibling temporary and renames over `path`, so a failed write
// never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

PermKey read_key(const std::filesystem::path& path);
void write_key(const std::filesystem::path& path, const PermKey& key);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

// Sniffs the magic: TNSR, P6 or P5.
Tensor read_image(const std::filesystem::path& path);

}  // namespace permnet
