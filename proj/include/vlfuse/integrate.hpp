#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>
#include <vector>

#include "vlfuse/frame.hpp"
#include "vlfuse/volume.hpp"

namespace vlfuse {

/// Projective TSDF sample of a world point from one view, normalized by the
/// truncation distance. Absent when the point is behind the camera, projects
/// outside the image, hits invalid depth, or lies more than one truncation
/// length behind the observed surface.
inline std::optional<float> view_tsdf(const Frame& frame, const Vec3& p, double truncation,
                                      Vec2* pixel_out = nullptr) {
  const Vec3 cam = frame.pose.to_camera(p);
  if (cam.z() <= 0.0) return std::nullopt;
  const Vec2 px = frame.project(cam);
  const long u = std::lround(px.x());
  const long v = std::lround(px.y());
  if (u < 0 || v < 0 || u >= frame.width || v >= frame.height) return std::nullopt;
  const double depth = frame.depth_at(static_cast<int>(u), static_cast<int>(v));
  if (!(depth > 0.0)) return std::nullopt;
  const double sdf = depth - cam.z();
  if (sdf < -truncation) return std::nullopt;
  if (pixel_out) *pixel_out = px;
  return static_cast<float>(std::clamp(sdf / truncation, -1.0, 1.0));
}

struct IntegrationStats {
  std::size_t voxels_touched = 0;   // geometry updated
  std::size_t voxels_in_band = 0;   // semantics and language updated
};

namespace detail {

inline void running_mean(std::span<float> acc, std::span<const float> sample, float acc_w, float w) {
  const float denom = acc_w + w;
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] = (acc[k] * acc_w + sample[k] * w) / denom;
}

}  // namespace detail

/// Fuses one frame into the volume with running weighted averages:
/// geometry over the visible truncation band, class distribution and
/// language features only where |d| < 1.
inline IntegrationStats integrate_frame(MultiVolume& vol, const Frame& frame,
                                        unsigned num_threads = 0) {
  const GridConfig& cfg = vol.config();
  frame.validate(cfg.num_classes, cfg.feature_dim);
  const float w = frame.view_weight;
  const int nz = cfg.dims[2];

  auto work = [&](int z_begin, int z_end, IntegrationStats& stats) {
    std::vector<float> sem(static_cast<std::size_t>(cfg.num_classes));
    std::vector<float> feat;
    for (int z = z_begin; z < z_end; ++z) {
      for (int y = 0; y < cfg.dims[1]; ++y) {
        for (int x = 0; x < cfg.dims[0]; ++x) {
          const Index3 idx{x, y, z};
          Vec2 px;
          auto d = view_tsdf(frame, cfg.voxel_center(idx), cfg.truncation, &px);
          if (!d) continue;
          const std::size_t i = cfg.linear(idx);
          const float W = vol.weight(i);
          vol.tsdf(i) = (vol.tsdf(i) * W + *d * w) / (W + w);
          vol.weight(i) = W + w;
          ++stats.voxels_touched;
          if (std::abs(*d) >= 1.0f) continue;
          sem = sample_semantics(frame.semantics, px);
          feat = sample_coarse(frame.coarse, px);
          const float Wf = vol.feature_weight(i);
          detail::running_mean(vol.class_probs(i), sem, Wf, w);
          detail::running_mean(vol.lang_feat(i), feat, Wf, w);
          vol.feature_weight(i) = Wf + w;
          ++stats.voxels_in_band;
        }
      }
    }
  };

  unsigned threads = num_threads ? num_threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(nz));
  std::vector<IntegrationStats> partial(threads);
  if (threads <= 1) {
    work(0, nz, partial[0]);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      const int b = static_cast<int>(static_cast<long>(nz) * t / threads);
      const int e = static_cast<int>(static_cast<long>(nz) * (t + 1) / threads);
      pool.emplace_back([&, b, e, t] { work(b, e, partial[t]); });
    }
  }
  IntegrationStats total;
  for (const auto& s : partial) {
    total.voxels_touched += s.voxels_touched;
    total.voxels_in_band += s.voxels_in_band;
  }
  return total;
}

}  // namespace vlfuse
