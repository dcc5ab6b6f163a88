#pragma once

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "vlfuse/detail/mc_tables.hpp"
#include "vlfuse/mesh.hpp"
#include "vlfuse/volume.hpp"

namespace vlfuse {

/// Marching cubes over the tsdf zero level set. Cells with any unobserved
/// corner (weight 0) are skipped. Vertices are shared between neighboring
/// cells, so closed surfaces come out watertight.
inline Mesh extract_mesh(const MultiVolume& vol) {
  const GridConfig& cfg = vol.config();
  Mesh mesh;
  mesh.feature_dim = 0;
  const auto [nx, ny, nz] = cfg.dims;
  if (nx < 2 || ny < 2 || nz < 2) return mesh;

  // Key: linear index of the edge's lower corner * 3 + axis.
  std::unordered_map<std::size_t, std::uint32_t> edge_vertex;
  auto vertex_on_edge = [&](const Index3& a, const Index3& b) -> std::uint32_t {
    const int axis = a.x != b.x ? 0 : (a.y != b.y ? 1 : 2);
    const Index3 lo = std::min(a, b);
    const Index3 hi = std::max(a, b);
    const std::size_t key = cfg.linear(lo) * 3 + static_cast<std::size_t>(axis);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double v0 = vol.tsdf(cfg.linear(lo));
    const double v1 = vol.tsdf(cfg.linear(hi));
    const double t = v0 / (v0 - v1);
    const Vec3 p = cfg.voxel_center(lo) + t * (cfg.voxel_center(hi) - cfg.voxel_center(lo));
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.emplace_back(p.cast<float>());
    edge_vertex.emplace(key, id);
    return id;
  };

  std::array<Index3, 8> corners;
  std::array<float, 8> values;
  for (int z = 0; z + 1 < nz; ++z) {
    for (int y = 0; y + 1 < ny; ++y) {
      for (int x = 0; x + 1 < nx; ++x) {
        int cube = 0;
        bool observed = true;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kMcCornerOffsets[static_cast<std::size_t>(c)];
          corners[static_cast<std::size_t>(c)] = {x + o[0], y + o[1], z + o[2]};
          const std::size_t i = cfg.linear(corners[static_cast<std::size_t>(c)]);
          if (vol.weight(i) <= 0.0f) {
            observed = false;
            break;
          }
          values[static_cast<std::size_t>(c)] = vol.tsdf(i);
          if (values[static_cast<std::size_t>(c)] < 0.0f) cube |= 1 << c;
        }
        if (!observed || detail::kMcEdgeTable[static_cast<std::size_t>(cube)] == 0) continue;
        std::array<std::uint32_t, 12> edge_ids{};
        const auto mask = detail::kMcEdgeTable[static_cast<std::size_t>(cube)];
        for (int e = 0; e < 12; ++e) {
          if (!(mask & (1u << e))) continue;
          const auto& ec = detail::kMcEdgeCorners[static_cast<std::size_t>(e)];
          edge_ids[static_cast<std::size_t>(e)] =
              vertex_on_edge(corners[static_cast<std::size_t>(ec[0])], corners[static_cast<std::size_t>(ec[1])]);
        }
        const auto& tri = detail::kMcTriTable[static_cast<std::size_t>(cube)];
        for (int k = 0; tri[static_cast<std::size_t>(k)] != -1; k += 3) {
          mesh.triangles.push_back({edge_ids[static_cast<std::size_t>(tri[static_cast<std::size_t>(k)])],
                                    edge_ids[static_cast<std::size_t>(tri[static_cast<std::size_t>(k + 1)])],
                                    edge_ids[static_cast<std::size_t>(tri[static_cast<std::size_t>(k + 2)])]});
        }
      }
    }
  }
  return mesh;
}

namespace detail {

/// Trilinear stencil at a continuous grid coordinate, clamped into the grid.
struct TrilinearStencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  bool clamped = false;
};

inline TrilinearStencil trilinear_stencil(const GridConfig& cfg, const Vec3& world) {
  TrilinearStencil s;
  Vec3 g = cfg.to_grid(world);
  for (int a = 0; a < 3; ++a) {
    const double hi = cfg.dims[static_cast<std::size_t>(a)] - 1;
    if (g[a] < 0.0 || g[a] > hi) s.clamped = true;
    g[a] = std::clamp(g[a], 0.0, hi);
  }
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const int hi = cfg.dims[static_cast<std::size_t>(a)] - 1;
    base[a] = std::min(static_cast<int>(std::floor(g[a])), std::max(hi - 1, 0));
    frac[a] = hi == 0 ? 0.0 : g[a] - base[a];
  }
  for (int c = 0; c < 8; ++c) {
    const int ox = c & 1, oy = (c >> 1) & 1, oz = (c >> 2) & 1;
    const Index3 v{std::min(base[0] + ox, cfg.dims[0] - 1), std::min(base[1] + oy, cfg.dims[1] - 1),
                   std::min(base[2] + oz, cfg.dims[2] - 1)};
    s.index[static_cast<std::size_t>(c)] = cfg.linear(v);
    s.weight[static_cast<std::size_t>(c)] = (ox ? frac[0] : 1 - frac[0]) * (oy ? frac[1] : 1 - frac[1]) *
                                            (oz ? frac[2] : 1 - frac[2]);
  }
  return s;
}

}  // namespace detail

/// Raw (unnormalized) trilinear interpolation of the language channel.
inline std::vector<float> interpolate_lang_feat(const MultiVolume& vol, const Vec3& world) {
  const auto s = detail::trilinear_stencil(vol.config(), world);
  std::vector<double> acc(static_cast<std::size_t>(vol.feature_dim()), 0.0);
  for (int c = 0; c < 8; ++c) {
    const double w = s.weight[static_cast<std::size_t>(c)];
    if (w == 0.0) continue;
    auto f = vol.lang_feat(s.index[static_cast<std::size_t>(c)]);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * f[k];
  }
  return {acc.begin(), acc.end()};
}

struct ResampleStats {
  std::size_t clamped_vertices = 0;
  std::size_t labeled_vertices = 0;
};

/// Attaches unit-norm language features and class labels to every vertex by
/// trilinear interpolation of the volume channels.
inline ResampleStats resample_vertex_features(const MultiVolume& vol, Mesh& mesh,
                                              float min_weight = kMinLabelWeight) {
  const int dim = vol.feature_dim();
  const int ncls = vol.num_classes();
  ResampleStats stats;
  mesh.feature_dim = dim;
  mesh.vertex_feats.assign(mesh.vertices.size() * static_cast<std::size_t>(dim), 0.0f);
  mesh.vertex_class.assign(mesh.vertices.size(), kUnlabeled);
  std::vector<double> feat(static_cast<std::size_t>(dim));
  std::vector<double> probs(static_cast<std::size_t>(ncls));
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const auto s = detail::trilinear_stencil(vol.config(), mesh.vertices[v].cast<double>());
    if (s.clamped) ++stats.clamped_vertices;
    std::fill(feat.begin(), feat.end(), 0.0);
    std::fill(probs.begin(), probs.end(), 0.0);
    double weight = 0.0;
    for (int c = 0; c < 8; ++c) {
      const double w = s.weight[static_cast<std::size_t>(c)];
      if (w == 0.0) continue;
      const std::size_t i = s.index[static_cast<std::size_t>(c)];
      auto f = vol.lang_feat(i);
      for (int k = 0; k < dim; ++k) feat[static_cast<std::size_t>(k)] += w * f[static_cast<std::size_t>(k)];
      auto p = vol.class_probs(i);
      for (int k = 0; k < ncls; ++k) probs[static_cast<std::size_t>(k)] += w * p[static_cast<std::size_t>(k)];
      weight += w * vol.feature_weight(i);
    }
    double n2 = 0.0;
    for (double x : feat) n2 += x * x;
    if (n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      for (int k = 0; k < dim; ++k)
        mesh.vertex_feats[v * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)] =
            static_cast<float>(feat[static_cast<std::size_t>(k)] * inv);
    }
    if (weight >= min_weight) {
      const auto best = std::max_element(probs.begin(), probs.end());
      if (*best > 0.0) {
        mesh.vertex_class[v] = static_cast<std::int32_t>(best - probs.begin());
        ++stats.labeled_vertices;
      }
    }
  }
  return stats;
}

}  // namespace vlfuse
