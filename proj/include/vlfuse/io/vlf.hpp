#pragma once

// ".vlf" dense float tensors: "VLF1", u32 rows, cols, dim, then rows*cols*dim f32,
// row-major, little-endian. Feature maps append a footer of patch_size, stride,
// image_w, image_h (u32 each).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlfuse/io/binary.hpp"

namespace vlfuse::io {

struct VlfTensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::size_t cell(std::uint32_t r, std::uint32_t c) const {
    return (static_cast<std::size_t>(r) * cols + c) * dim;
  }
};

struct VlfFooter {
  std::uint32_t patch_size = 0;
  std::uint32_t stride = 0;
  std::uint32_t image_w = 0;
  std::uint32_t image_h = 0;

  friend bool operator==(const VlfFooter&, const VlfFooter&) = default;
};

inline std::vector<char> encode_vlf(const VlfTensor& t, const std::optional<VlfFooter>& footer = {}) {
  require(t.values.size() == static_cast<std::size_t>(t.rows) * t.cols * t.dim,
          "vlf tensor size does not match rows*cols*dim");
  ByteWriter w;
  w.magic("VLF1");
  w.u32(t.rows);
  w.u32(t.cols);
  w.u32(t.dim);
  w.f32s(t.values);
  if (footer) {
    w.u32(footer->patch_size);
    w.u32(footer->stride);
    w.u32(footer->image_w);
    w.u32(footer->image_h);
  }
  return w.take();
}

struct VlfFile {
  VlfTensor tensor;
  std::optional<VlfFooter> footer;
};

inline VlfFile decode_vlf(std::span<const char> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("VLF1");
  VlfFile out;
  out.tensor.rows = r.u32();
  out.tensor.cols = r.u32();
  out.tensor.dim = r.u32();
  const std::size_t n = static_cast<std::size_t>(out.tensor.rows) * out.tensor.cols * out.tensor.dim;
  if (n * 4 > r.remaining()) fail(ErrorKind::kCorrupt, source + ": truncated payload");
  out.tensor.values.resize(n);
  r.f32s(out.tensor.values);
  if (r.remaining() == 16) {
    VlfFooter f;
    f.patch_size = r.u32();
    f.stride = r.u32();
    f.image_w = r.u32();
    f.image_h = r.u32();
    out.footer = f;
  } else if (r.remaining() != 0) {
    fail(ErrorKind::kCorrupt, source + ": unexpected trailing bytes");
  }
  return out;
}

inline VlfFile read_vlf(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return decode_vlf(bytes, path.string());
}

inline void write_vlf(const std::filesystem::path& path, const VlfTensor& t,
                      const std::optional<VlfFooter>& footer = {}) {
  write_file_atomic(path, encode_vlf(t, footer));
}

// ".vlk" keyed embeddings: "VLK1", u32 count, u32 dim, then per entry a u32 byte
// length, the UTF-8 key, and dim f32 values. Keys are unique.

using KeyedVectors = std::map<std::string, std::vector<float>>;

inline std::vector<char> encode_vlk(const KeyedVectors& entries, std::uint32_t dim) {
  ByteWriter w;
  w.magic("VLK1");
  w.u32(static_cast<std::uint32_t>(entries.size()));
  w.u32(dim);
  for (const auto& [key, vec] : entries) {
    require(vec.size() == dim, "embedding '" + key + "' has wrong dimension");
    w.u32(static_cast<std::uint32_t>(key.size()));
    w.raw(std::span<const char>(key.data(), key.size()));
    w.f32s(vec);
  }
  return w.take();
}

inline KeyedVectors decode_vlk(std::span<const char> bytes, const std::string& source,
                               std::uint32_t* dim_out = nullptr) {
  ByteReader r(bytes, source);
  r.expect_magic("VLK1");
  const auto count = r.u32();
  const auto dim = r.u32();
  KeyedVectors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32();
    auto key_bytes = r.raw(len);
    std::string key(key_bytes.begin(), key_bytes.end());
    std::vector<float> vec(dim);
    r.f32s(vec);
    if (!out.emplace(std::move(key), std::move(vec)).second)
      fail(ErrorKind::kCorrupt, source + ": duplicate key");
  }
  if (dim_out) *dim_out = dim;
  return out;
}

}  // namespace vlfuse::io
