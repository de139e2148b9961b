#include "permnet/formats.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <string_view>

#include "permnet/error.hpp"

namespace permnet {
namespace {

constexpr std::string_view kKeyMagic = "PKEY";
constexpr std::string_view kTensorMagic = "TNSR";
constexpr std::uint8_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | bytes[at + static_cast<std::size_t>(k)];
  return v;
}

bool has_magic(std::span<const std::uint8_t> bytes, std::string_view magic) {
  return bytes.size() >= magic.size() &&
         std::memcmp(bytes.data(), magic.data(), magic.size()) == 0;
}

void check_preamble(std::span<const std::uint8_t> bytes, std::string_view magic,
                    const char* what) {
  if (bytes.size() < magic.size()) {
    raise(ErrorCode::kIntegrity, std::string(what) + " truncated: " +
                                     std::to_string(bytes.size()) + " bytes");
  }
  if (!has_magic(bytes, magic)) {
    raise(ErrorCode::kFormat, std::string(what) + " has bad magic, expected '" +
                                  std::string(magic) + "'");
  }
  if (bytes.size() < magic.size() + 1) {
    raise(ErrorCode::kIntegrity, std::string(what) + " truncated before version byte");
  }
  if (bytes[magic.size()] != kVersion) {
    raise(ErrorCode::kFormat, std::string(what) + " version " +
                                  std::to_string(bytes[magic.size()]) + " is not supported");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_key(const PermKey& key) {
  std::vector<std::uint8_t> out(kKeyMagic.begin(), kKeyMagic.end());
  out.reserve(kKeyHeaderBytes + 4 * key.area());
  out.push_back(kVersion);
  put_u32(out, static_cast<std::uint32_t>(key.height()));
  put_u32(out, static_cast<std::uint32_t>(key.width()));
  for (std::uint32_t source : key.map()) put_u32(out, source);
  return out;
}

PermKey decode_key(std::span<const std::uint8_t> bytes) {
  check_preamble(bytes, kKeyMagic, "key file");
  if (bytes.size() < kKeyHeaderBytes) {
    raise(ErrorCode::kIntegrity, "key file truncated inside header");
  }
  const std::uint64_t h = get_u32(bytes, 5);
  const std::uint64_t w = get_u32(bytes, 9);
  if (h == 0 || w == 0) {
    raise(ErrorCode::kIntegrity, "key grid " + std::to_string(h) + "x" + std::to_string(w) +
                                     " has zero area");
  }
  const std::uint64_t expected = kKeyHeaderBytes + 4 * h * w;
  if (bytes.size() != expected) {
    raise(ErrorCode::kIntegrity, "key file is " + std::to_string(bytes.size()) +
                                     " bytes, header implies " + std::to_string(expected));
  }
  std::vector<std::uint32_t> map(h * w);
  for (std::size_t q = 0; q < map.size(); ++q) map[q] = get_u32(bytes, kKeyHeaderBytes + 4 * q);
  return PermKey(h, w, std::move(map));
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  std::vector<std::uint8_t> out(kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * tensor.size());
  for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  check_preamble(bytes, kTensorMagic, "tensor file");
  if (bytes.size() < kTensorPreambleBytes) {
    raise(ErrorCode::kIntegrity, "tensor file truncated before rank byte");
  }
  const std::size_t rank = bytes[5];
  if (rank == 0 || rank > 4) {
    raise(ErrorCode::kFormat, "tensor rank " + std::to_string(rank) + " outside 1..4");
  }
  const std::size_t header = kTensorPreambleBytes + 4 * rank;
  if (bytes.size() < header) raise(ErrorCode::kIntegrity, "tensor file truncated inside dims");
  Tensor::Dims dims(rank);
  std::uint64_t volume = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    dims[k] = get_u32(bytes, kTensorPreambleBytes + 4 * k);
    if (dims[k] == 0) raise(ErrorCode::kIntegrity, "tensor dim " + std::to_string(k) + " is zero");
    volume *= dims[k];
  }
  if (bytes.size() != header + 4 * volume) {
    raise(ErrorCode::kIntegrity, "tensor file is " + std::to_string(bytes.size()) +
                                     " bytes, header " + describe_dims(dims) + " implies " +
                                     std::to_string(header + 4 * volume));
  }
  std::vector<float> values(volume);
  for (std::size_t k = 0; k < volume; ++k) {
    values[k] = std::bit_cast<float>(get_u32(bytes, header + 4 * k));
  }
  Tensor tensor(std::move(dims), std::move(values));
  if (!tensor.all_finite()) raise(ErrorCode::kIntegrity, "tensor file holds non-finite values");
  return tensor;
}

Tensor decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    raise(ErrorCode::kFormat, "not a binary PPM (P6) or PGM (P5) image");
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  auto next_field = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      raise(ErrorCode::kFormat, "malformed netpbm header at byte " + std::to_string(pos));
    }
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos++] - '0');
      if (value > (1u << 24)) raise(ErrorCode::kFormat, "netpbm header field too large");
    }
    return value;
  };
  const std::size_t width = next_field();
  const std::size_t height = next_field();
  const std::size_t maxval = next_field();
  if (width == 0 || height == 0) raise(ErrorCode::kFormat, "netpbm image has zero area");
  if (maxval == 0 || maxval > 255) {
    raise(ErrorCode::kFormat, "netpbm maxval " + std::to_string(maxval) + " is not in 1..255");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    raise(ErrorCode::kFormat, "netpbm header must end in a single whitespace byte");
  }
  ++pos;
  const std::size_t plane = width * height;
  if (bytes.size() - pos < plane * channels) {
    raise(ErrorCode::kIntegrity, "netpbm raster truncated: need " +
                                     std::to_string(plane * channels) + " bytes, have " +
                                     std::to_string(bytes.size() - pos));
  }
  Tensor image = Tensor::chw(channels, height, width);
  const auto scale = static_cast<float>(maxval);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      image[c * plane + p] = static_cast<float>(bytes[pos + p * channels + c]) / scale;
    }
  }
  return image;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::random_device entropy;
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(entropy());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::kIo, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      raise(ErrorCode::kIo, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    raise(ErrorCode::kIo, "cannot move output into place at " + path.string());
  }
}

PermKey read_key(const std::filesystem::path& path) { return decode_key(read_file(path)); }

void write_key(const std::filesystem::path& path, const PermKey& key) {
  write_file_atomic(path, encode_key(key));
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  write_file_atomic(path, encode_tensor(tensor));
}

Tensor read_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (has_magic(bytes, kTensorMagic)) return decode_tensor(bytes);
  if (has_magic(bytes, "P6") || has_magic(bytes, "P5")) return decode_netpbm(bytes);
  raise(ErrorCode::kFormat, path.string() + " is neither a TNSR tensor nor a P5/P6 image");
}

}  // namespace permnet
