#pragma once

// ".vvol" volume snapshot: "VVOL", u32 format version, origin f64x3, voxel_size
// f64, truncation f64, dims u32x3, C u32, D u32, then f32 channels in order
// tsdf, weight, feature weight, class probs (N*C), language features (N*D).

#include <filesystem>

#include "vlfuse/io/binary.hpp"
#include "vlfuse/volume.hpp"

namespace vlfuse::io {

inline constexpr std::uint32_t kVolumeFormatVersion = 1;

inline std::vector<char> encode_volume(const MultiVolume& vol) {
  const auto& c = vol.config();
  ByteWriter w;
  w.magic("VVOL");
  w.u32(kVolumeFormatVersion);
  for (int k = 0; k < 3; ++k) w.f64(c.origin[k]);
  w.f64(c.voxel_size);
  w.f64(c.truncation);
  for (int k = 0; k < 3; ++k) w.u32(static_cast<std::uint32_t>(c.dims[static_cast<std::size_t>(k)]));
  w.u32(static_cast<std::uint32_t>(c.num_classes));
  w.u32(static_cast<std::uint32_t>(c.feature_dim));
  w.f32s(vol.tsdf_channel());
  w.f32s(vol.weight_channel());
  w.f32s(vol.feature_weight_channel());
  w.f32s(vol.class_prob_channel());
  w.f32s(vol.lang_feat_channel());
  return w.take();
}

inline MultiVolume decode_volume(std::span<const char> bytes, const std::string& source,
                                 std::size_t budget_bytes = kDefaultMemoryBudget) {
  ByteReader r(bytes, source);
  r.expect_magic("VVOL");
  if (r.u32() != kVolumeFormatVersion) fail(ErrorKind::kCorrupt, source + ": unsupported volume version");
  GridConfig c;
  for (int k = 0; k < 3; ++k) c.origin[k] = r.f64();
  c.voxel_size = r.f64();
  c.truncation = r.f64();
  for (int k = 0; k < 3; ++k) c.dims[static_cast<std::size_t>(k)] = static_cast<int>(r.u32());
  c.num_classes = static_cast<int>(r.u32());
  c.feature_dim = static_cast<int>(r.u32());
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kCorrupt, source + ": " + e.what());
  }
  if (r.remaining() != c.storage_bytes()) fail(ErrorKind::kCorrupt, source + ": channel payload size mismatch");
  MultiVolume vol = new_volume(c, budget_bytes);
  r.f32s(vol.tsdf_channel());
  r.f32s(vol.weight_channel());
  r.f32s(vol.feature_weight_channel());
  r.f32s(vol.class_prob_channel());
  r.f32s(vol.lang_feat_channel());
  return vol;
}

inline void write_volume(const std::filesystem::path& path, const MultiVolume& vol) {
  write_file_atomic(path, encode_volume(vol));
}

inline MultiVolume read_volume(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return decode_volume(bytes, path.string());
}

}  // namespace vlfuse::io
