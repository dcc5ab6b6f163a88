#pragma once

// End-to-end helpers shared by the CLI, the service and the tests: frames in,
// volume + mesh + inventory out.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "vlfuse/integrate.hpp"
#include "vlfuse/io/frameset.hpp"
#include "vlfuse/meshing.hpp"
#include "vlfuse/segmentation.hpp"

namespace vlfuse {

struct Bounds {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return !(lo.array() <= hi.array()).all(); }
  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Bounds& b) {
    if (b.empty()) return;
    extend(b.lo);
    extend(b.hi);
  }
};

/// World-space bounds of every valid back-projected depth sample.
inline Bounds frame_bounds(const Frame& f) {
  Bounds b;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      const double d = f.depth_at(x, y);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 cam((x - f.intrinsics.cx) / f.intrinsics.fx * d, (y - f.intrinsics.cy) / f.intrinsics.fy * d, d);
      b.extend(f.pose.to_world(cam));
    }
  return b;
}

/// Grid covering `b` padded by one truncation band.
inline GridConfig grid_for_bounds(const Bounds& b, double voxel_size, int num_classes, int feature_dim) {
  if (b.empty()) fail(ErrorKind::kInvalidArgument, "frames contain no valid depth");
  require(std::isfinite(voxel_size) && voxel_size > 0.0, "voxel_size must be positive");
  const double pad = 3.0 * voxel_size + voxel_size;
  const Vec3 lo = b.lo - Vec3::Constant(pad);
  const Vec3 extent = (b.hi - b.lo) + Vec3::Constant(2 * pad);
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    const double n = std::ceil(extent[a] / voxel_size) + 1;
    if (n > 1e6) fail(ErrorKind::kBudgetExceeded, "scene extent too large for voxel size");
    dims[static_cast<std::size_t>(a)] = static_cast<int>(n);
  }
  auto cfg = GridConfig::make(lo, voxel_size, dims, num_classes, feature_dim);
  cfg.validate();
  return cfg;
}

struct FuseOptions {
  double voxel_size = 0.04;
  std::size_t memory_budget = kDefaultMemoryBudget;
  float min_weight = kMinLabelWeight;
  std::size_t min_segment_size = kDefaultMinSegmentSize;
  Connectivity connectivity = Connectivity::kFaces6;
  unsigned threads = 0;
};

struct SceneArtifacts {
  MultiVolume volume;
  Mesh mesh;
  Inventory inventory;
};

inline Mesh mesh_volume(const MultiVolume& vol, float min_weight = kMinLabelWeight) {
  Mesh mesh = extract_mesh(vol);
  resample_vertex_features(vol, mesh, min_weight);
  return mesh;
}

inline Inventory segment_volume(const MultiVolume& vol, const std::vector<std::string>& class_names,
                                const FuseOptions& opts = {}) {
  const auto labels = label_voxels(vol, opts.min_weight);
  const auto raw = flood_fill(labels, opts.min_segment_size, opts.connectivity);
  return build_inventory(raw, vol, class_names);
}

inline SceneArtifacts finish_scene(MultiVolume vol, const std::vector<std::string>& class_names,
                                   const FuseOptions& opts) {
  Mesh mesh = mesh_volume(vol, opts.min_weight);
  Inventory inv = segment_volume(vol, class_names, opts);
  return {std::move(vol), std::move(mesh), std::move(inv)};
}

/// Fuses in-memory frames into a grid sized to their depth bounds.
inline SceneArtifacts fuse_frames(const std::vector<Frame>& frames, const std::vector<std::string>& class_names,
                                  const FuseOptions& opts = {}) {
  if (frames.empty()) fail(ErrorKind::kInvalidArgument, "no frames to fuse");
  const int C = frames.front().semantics.num_classes;
  const int D = frames.front().coarse.dim();
  Bounds b;
  for (const auto& f : frames) b.extend(frame_bounds(f));
  auto vol = new_volume(grid_for_bounds(b, opts.voxel_size, C, D), opts.memory_budget);
  for (const auto& f : frames) integrate_frame(vol, f, opts.threads);
  return finish_scene(std::move(vol), class_names, opts);
}

/// Fuses a frame-set directory, streaming one frame at a time so only the
/// volume stays resident.
inline SceneArtifacts fuse_frameset(const std::filesystem::path& dir, const FuseOptions& opts = {}) {
  const auto records = io::read_poses(dir);
  if (records.empty()) fail(ErrorKind::kInvalidArgument, "frame set has no frames: " + dir.string());
  Bounds b;
  int C = 0;
  int D = 0;
  for (const auto& rec : records) {
    const Frame f = io::read_frame(dir, rec);
    if (C == 0) {
      C = f.semantics.num_classes;
      D = f.coarse.dim();
    }
    b.extend(frame_bounds(f));
  }
  auto vol = new_volume(grid_for_bounds(b, opts.voxel_size, C, D), opts.memory_budget);
  for (const auto& rec : records) integrate_frame(vol, io::read_frame(dir, rec), opts.threads);
  return finish_scene(std::move(vol), io::read_class_names(dir, C), opts);
}

}  // namespace vlfuse
