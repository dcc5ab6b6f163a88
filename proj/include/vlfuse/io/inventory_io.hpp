#pragma once

// Inventory persistence: JSON (ids, classes, names, flags, centroids, voxel
// lists) plus a ".vlf" sidecar holding every segment's per-voxel features,
// rows concatenated in segment order (rows = total voxels, cols = 1, dim = D).

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vlfuse/io/vlf.hpp"
#include "vlfuse/segmentation.hpp"

namespace vlfuse::io {

inline constexpr const char* kInventorySchema = "vlfuse-inventory/1";

inline nlohmann::json grid_to_json(const GridConfig& g) {
  return {{"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
          {"voxel_size", g.voxel_size},
          {"dims", g.dims},
          {"num_classes", g.num_classes},
          {"feature_dim", g.feature_dim},
          {"truncation", g.truncation}};
}

inline GridConfig grid_from_json(const nlohmann::json& j) {
  GridConfig g;
  const auto o = j.at("origin").get<std::array<double, 3>>();
  g.origin = Vec3(o[0], o[1], o[2]);
  g.voxel_size = j.at("voxel_size").get<double>();
  g.dims = j.at("dims").get<std::array<int, 3>>();
  g.num_classes = j.at("num_classes").get<int>();
  g.feature_dim = j.at("feature_dim").get<int>();
  g.truncation = j.at("truncation").get<double>();
  g.validate();
  return g;
}

/// Summary JSON without voxel lists, as served to clients.
inline nlohmann::json segment_summary(const ObjectSegment& s, const Inventory& inv) {
  nlohmann::json j = {{"id", s.id},
                      {"class_id", s.class_id},
                      {"class_name", inv.class_names.at(static_cast<std::size_t>(s.class_id))},
                      {"auto_name", s.auto_name},
                      {"user_name", s.user_name ? nlohmann::json(*s.user_name) : nlohmann::json(nullptr)},
                      {"label", s.label()},
                      {"remembered", s.remembered},
                      {"insitu_class", s.insitu_class ? nlohmann::json(*s.insitu_class) : nlohmann::json(nullptr)},
                      {"centroid", {s.centroid.x(), s.centroid.y(), s.centroid.z()}},
                      {"voxel_count", s.voxels.size()}};
  return j;
}

inline nlohmann::json inventory_summary(const Inventory& inv) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : inv.segments) segs.push_back(segment_summary(s, inv));
  return {{"schema", kInventorySchema}, {"class_names", inv.class_names}, {"grid", grid_to_json(inv.grid)},
          {"segments", segs}};
}

inline nlohmann::json inventory_to_json(const Inventory& inv) {
  auto j = inventory_summary(inv);
  for (std::size_t k = 0; k < inv.segments.size(); ++k) j["segments"][k]["voxels"] = inv.segments[k].voxels;
  return j;
}

inline VlfTensor inventory_features(const Inventory& inv) {
  VlfTensor t;
  t.cols = 1;
  t.dim = static_cast<std::uint32_t>(inv.feature_dim());
  for (const auto& s : inv.segments) {
    t.rows += static_cast<std::uint32_t>(s.voxels.size());
    t.values.insert(t.values.end(), s.voxel_feats.begin(), s.voxel_feats.end());
  }
  return t;
}

inline Inventory inventory_from_json(const nlohmann::json& j, const VlfTensor& feats, const std::string& source) {
  Inventory inv;
  try {
    if (j.at("schema").get<std::string>() != kInventorySchema)
      fail(ErrorKind::kCorrupt, source + ": unsupported inventory schema");
    inv.class_names = j.at("class_names").get<std::vector<std::string>>();
    inv.grid = grid_from_json(j.at("grid"));
    std::size_t row = 0;
    const auto dim = static_cast<std::size_t>(inv.feature_dim());
    if (feats.dim != dim) fail(ErrorKind::kCorrupt, source + ": feature sidecar dim mismatch");
    for (const auto& js : j.at("segments")) {
      ObjectSegment s;
      s.id = js.at("id").get<int>();
      s.class_id = js.at("class_id").get<int>();
      s.auto_name = js.at("auto_name").get<std::string>();
      if (!js.at("user_name").is_null()) s.user_name = js.at("user_name").get<std::string>();
      s.remembered = js.at("remembered").get<bool>();
      if (!js.at("insitu_class").is_null()) s.insitu_class = js.at("insitu_class").get<int>();
      const auto c = js.at("centroid").get<std::array<double, 3>>();
      s.centroid = Vec3(c[0], c[1], c[2]);
      s.voxels = js.at("voxels").get<std::vector<std::size_t>>();
      if ((row + s.voxels.size()) * dim > feats.values.size())
        fail(ErrorKind::kCorrupt, source + ": feature sidecar shorter than voxel lists");
      s.voxel_feats.assign(feats.values.begin() + static_cast<std::ptrdiff_t>(row * dim),
                           feats.values.begin() + static_cast<std::ptrdiff_t>((row + s.voxels.size()) * dim));
      row += s.voxels.size();
      inv.segments.push_back(std::move(s));
    }
    if (row * dim != feats.values.size()) fail(ErrorKind::kCorrupt, source + ": feature sidecar longer than voxel lists");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, source + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCorrupt) throw;
    fail(ErrorKind::kCorrupt, source + ": " + e.what());
  }
  try {
    inv.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kCorrupt, source + ": " + e.what());
  }
  return inv;
}

inline void write_inventory(const std::filesystem::path& json_path, const std::filesystem::path& feats_path,
                            const Inventory& inv) {
  inv.validate();
  write_vlf(feats_path, inventory_features(inv));
  write_text_atomic(json_path, inventory_to_json(inv).dump(1));
}

inline Inventory read_inventory(const std::filesystem::path& json_path, const std::filesystem::path& feats_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(json_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, json_path.string() + ": " + e.what());
  }
  auto feats = read_vlf(feats_path);
  return inventory_from_json(j, feats.tensor, json_path.string());
}

}  // namespace vlfuse::io
