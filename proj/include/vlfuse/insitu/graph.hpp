#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "vlfuse/segmentation.hpp"
#include "vlfuse/volume.hpp"

namespace vlfuse::insitu {

using Rng = std::mt19937_64;

inline constexpr int kDefaultGraphNodes = 30;
inline constexpr int kNullSource = 0;
inline constexpr int kDefaultNullRadius = 4;

/// Sparse graph sampled from an object's voxels. Node attributes are unit-norm
/// language features; edges are built on the fly by the model.
struct ObjectGraph {
  int num_nodes = 0;
  int dim = 0;
  std::vector<float> nodes;  // num_nodes * dim
  int source = kNullSource;  // segment id, or kNullSource

  std::span<const float> node(int i) const {
    return {nodes.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
};

/// Draws `count` indices from [0, population): without replacement when the
/// population is large enough, with replacement otherwise.
inline std::vector<std::size_t> draw_indices(std::size_t population, int count, Rng& rng) {
  require(population > 0, "cannot sample from an empty set");
  const auto n = static_cast<std::size_t>(count);
  std::vector<std::size_t> out;
  out.reserve(n);
  if (population >= n) {
    // Partial Fisher-Yates over an index permutation.
    std::vector<std::size_t> perm(population);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, population - 1);
      std::swap(perm[i], perm[pick(rng)]);
      out.push_back(perm[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, population - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pick(rng));
  }
  return out;
}

inline ObjectGraph sample_object_graph(const ObjectSegment& seg, int dim, int n, Rng& rng) {
  require(!seg.voxels.empty(), "cannot sample a graph from an empty segment");
  require(n >= 1, "graph needs at least one node");
  ObjectGraph g{n, dim, {}, seg.id};
  g.nodes.reserve(static_cast<std::size_t>(n) * dim);
  for (auto k : draw_indices(seg.voxels.size(), n, rng)) {
    auto f = seg.voxel_feature(k, dim);
    g.nodes.insert(g.nodes.end(), f.begin(), f.end());
  }
  return g;
}

/// Voxels eligible as "null" examples: labeled voxels outside every
/// personalized segment, with their unit language features.
class NullPool {
 public:
  /// Labeled voxels of the volume not owned by a personalized segment.
  static NullPool build(const Inventory& inv, const MultiVolume& vol, float min_weight = kMinLabelWeight) {
    const auto labels = label_voxels(vol, min_weight);
    std::vector<bool> personal(vol.size(), false);
    for (const auto* s : inv.personalized())
      for (auto v : s->voxels) personal[v] = true;
    NullPool pool(vol.config());
    for (std::size_t i = 0; i < vol.size(); ++i) {
      if (labels.labels[i] == kUnlabeled || personal[i]) continue;
      auto f = vol.normalized_lang_feat(i);
      if (std::all_of(f.begin(), f.end(), [](float x) { return x == 0.0f; })) continue;
      pool.add(i, f);
    }
    return pool;
  }

  /// Fallback without a volume: voxels of the non-personalized segments.
  static NullPool from_inventory(const Inventory& inv) {
    NullPool pool(inv.grid);
    const int dim = inv.feature_dim();
    std::vector<std::pair<std::size_t, std::span<const float>>> rows;
    for (const auto& s : inv.segments) {
      if (s.personalized()) continue;
      for (std::size_t k = 0; k < s.voxels.size(); ++k) rows.emplace_back(s.voxels[k], s.voxel_feature(k, dim));
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [v, f] : rows) {
      if (std::all_of(f.begin(), f.end(), [](float x) { return x == 0.0f; })) continue;
      pool.add(v, f);
    }
    return pool;
  }

  std::size_t size() const { return voxels_.size(); }
  int dim() const { return grid_.feature_dim; }
  const std::vector<std::size_t>& voxels() const { return voxels_; }
  std::span<const float> feature(std::size_t k) const {
    return {feats_.data() + k * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim())};
  }

  /// Pool positions of eligible voxels within `radius` voxels of pool entry `seed`.
  std::vector<std::size_t> neighborhood(std::size_t seed, int radius) const {
    const Index3 c = grid_.unravel(voxels_[seed]);
    std::vector<std::size_t> out;
    const double r2 = static_cast<double>(radius) * radius;
    for (int z = std::max(0, c.z - radius); z <= std::min(grid_.dims[2] - 1, c.z + radius); ++z)
      for (int y = std::max(0, c.y - radius); y <= std::min(grid_.dims[1] - 1, c.y + radius); ++y)
        for (int x = std::max(0, c.x - radius); x <= std::min(grid_.dims[0] - 1, c.x + radius); ++x) {
          const double d2 = double(x - c.x) * (x - c.x) + double(y - c.y) * (y - c.y) + double(z - c.z) * (z - c.z);
          if (d2 > r2) continue;
          const int slot = slot_[grid_.linear({x, y, z})];
          if (slot >= 0) out.push_back(static_cast<std::size_t>(slot));
        }
    return out;
  }

 private:
  explicit NullPool(const GridConfig& grid) : grid_(grid), slot_(grid.voxel_count(), -1) {}

  void add(std::size_t voxel, std::span<const float> f) {
    slot_[voxel] = static_cast<int>(voxels_.size());
    voxels_.push_back(voxel);
    feats_.insert(feats_.end(), f.begin(), f.end());
  }

  GridConfig grid_;
  std::vector<int> slot_;
  std::vector<std::size_t> voxels_;
  std::vector<float> feats_;
};

/// Null-class graph: a random eligible seed voxel, then `n` voxels drawn
/// uniformly from its spatial neighborhood. Falls back to the whole pool when
/// the neighborhood holds fewer than `n` voxels.
inline ObjectGraph sample_null_graph(const NullPool& pool, int n, Rng& rng, int radius = kDefaultNullRadius) {
  if (pool.size() < static_cast<std::size_t>(n))
    fail(ErrorKind::kInvalidArgument, "scene has " + std::to_string(pool.size()) +
                                          " eligible null voxels, need " + std::to_string(n));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const std::size_t seed = pick(rng);
  auto candidates = pool.neighborhood(seed, radius);
  ObjectGraph g{n, pool.dim(), {}, kNullSource};
  g.nodes.reserve(static_cast<std::size_t>(n) * pool.dim());
  if (candidates.size() >= static_cast<std::size_t>(n)) {
    for (auto k : draw_indices(candidates.size(), n, rng)) {
      auto f = pool.feature(candidates[k]);
      g.nodes.insert(g.nodes.end(), f.begin(), f.end());
    }
  } else {
    for (auto k : draw_indices(pool.size(), n, rng)) {
      auto f = pool.feature(k);
      g.nodes.insert(g.nodes.end(), f.begin(), f.end());
    }
  }
  return g;
}

inline ObjectGraph sample_null_graph(const Inventory& inv, const MultiVolume& vol, int n, Rng& rng,
                                     int radius = kDefaultNullRadius) {
  return sample_null_graph(NullPool::build(inv, vol), n, rng, radius);
}

/// k nearest neighbors (squared Euclidean) of every node, self excluded, ties
/// to the lower index. Result is row-major N x k.
template <typename Scalar>
std::vector<int> knn_edges(std::span<const Scalar> feats, int num_nodes, int dim, int k) {
  if (k >= num_nodes) fail(ErrorKind::kInvalidArgument, "knn needs k < number of nodes");
  require(k >= 1, "knn needs k >= 1");
  std::vector<int> out(static_cast<std::size_t>(num_nodes) * k);
  std::vector<std::pair<Scalar, int>> dist(static_cast<std::size_t>(num_nodes - 1));
  for (int i = 0; i < num_nodes; ++i) {
    int m = 0;
    for (int j = 0; j < num_nodes; ++j) {
      if (j == i) continue;
      Scalar d = 0;
      for (int c = 0; c < dim; ++c) {
        const Scalar diff = feats[static_cast<std::size_t>(i) * dim + c] - feats[static_cast<std::size_t>(j) * dim + c];
        d += diff * diff;
      }
      dist[static_cast<std::size_t>(m++)] = {d, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int t = 0; t < k; ++t) out[static_cast<std::size_t>(i) * k + t] = dist[static_cast<std::size_t>(t)].second;
  }
  return out;
}

}  // namespace vlfuse::insitu
