#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vlfuse/vlfuse.hpp"

namespace vlfuse::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "vlfuse-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> unit_vector(int dim, int axis) {
  std::vector<float> v(static_cast<std::size_t>(dim), 0.0f);
  v[static_cast<std::size_t>(axis)] = 1.0f;
  return v;
}

inline std::vector<float> random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = static_cast<float>(n(rng));
  normalize_in_place(v);
  return v;
}

/// Camera at the origin looking down +z (identity pose) at a flat wall `depth`
/// meters away. Semantics one-hot `cls`, every coarse patch equal to `feat`.
inline Frame wall_frame(int width, int height, float depth, int num_classes, int cls, const std::vector<float>& feat,
                        const Pose& pose = Pose(), int patch = 8, int stride = 4) {
  Frame f;
  f.width = width;
  f.height = height;
  f.intrinsics = {50.0, 50.0, (width - 1) * 0.5, (height - 1) * 0.5};
  f.pose = pose;
  f.depth.assign(static_cast<std::size_t>(width) * height, depth);
  std::vector<int> labels(static_cast<std::size_t>(width) * height, cls);
  if (patch > std::min(width, height)) {
    patch = std::min(width, height);
    stride = std::max(1, patch / 2);
  }
  f.semantics = SemanticMap::from_labels(width, height, num_classes, labels, {});
  const int rows = CoarseFeatureMap::lattice_count(height, patch, stride);
  const int cols = CoarseFeatureMap::lattice_count(width, patch, stride);
  std::vector<float> patches;
  for (int i = 0; i < rows * cols; ++i) patches.insert(patches.end(), feat.begin(), feat.end());
  f.coarse = build_coarse_map(std::move(patches), rows, cols, static_cast<int>(feat.size()), patch, stride, width, height);
  return f;
}

/// Small labeled grid with a few hand-placed segments and unit features.
inline Inventory toy_inventory(int dim = 4) {
  GridConfig g = GridConfig::make(Vec3::Zero(), 0.1, {10, 10, 10}, 3, dim);
  Inventory inv;
  inv.grid = g;
  inv.class_names = {"floor", "chair", "bottle"};
  auto add = [&](int id, int cls, std::vector<std::size_t> voxels, const std::string& name, int axis) {
    ObjectSegment s;
    s.id = id;
    s.class_id = cls;
    s.voxels = std::move(voxels);
    for (std::size_t k = 0; k < s.voxels.size(); ++k) {
      auto f = unit_vector(dim, axis % dim);
      s.voxel_feats.insert(s.voxel_feats.end(), f.begin(), f.end());
    }
    s.centroid = segment_centroid(g, s.voxels);
    s.auto_name = name;
    inv.segments.push_back(std::move(s));
  };
  add(1, 1, {0, 1, 2, 3}, "chair:1", 0);
  add(2, 1, {50, 51}, "chair:2", 1);
  add(3, 2, {200, 201, 202}, "bottle:1", 2);
  add(4, 2, {300, 301, 302, 303, 304, 305}, "bottle:2", 3);
  return inv;
}

}  // namespace vlfuse::test
