#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "vlfuse/mesh.hpp"
#include "vlfuse/volume.hpp"

namespace vlfuse {

struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<std::int32_t> labels;  // kUnlabeled where untrusted

  std::size_t size() const { return labels.size(); }
};

/// Per-voxel argmax of the class distribution where at least `min_weight` of
/// semantic observations exist. Ties go to the lowest class index; voxels that
/// never received class mass stay unlabeled.
inline LabelVolume label_voxels(const MultiVolume& vol, float min_weight = kMinLabelWeight) {
  LabelVolume out{vol.config().dims, std::vector<std::int32_t>(vol.size(), kUnlabeled)};
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (vol.feature_weight(i) < min_weight) continue;
    auto p = vol.class_probs(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
      if (p[c] > p[best]) best = c;
    if (p[best] > 0.0f) out.labels[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

enum class Connectivity { kFaces6 = 6, kFull26 = 26 };

struct RawSegment {
  std::int32_t class_id = kUnlabeled;
  std::vector<std::size_t> voxels;  // ascending linear index

  friend bool operator==(const RawSegment&, const RawSegment&) = default;
};

inline constexpr std::size_t kDefaultMinSegmentSize = 5;

/// Maximal connected components of equal-label voxels, dropping components
/// smaller than `min_size`. Ordered by (class, size descending, seed voxel).
inline std::vector<RawSegment> flood_fill(const LabelVolume& labels, std::size_t min_size = kDefaultMinSegmentSize,
                                          Connectivity connectivity = Connectivity::kFaces6) {
  const auto [nx, ny, nz] = labels.dims;
  require(labels.labels.size() == static_cast<std::size_t>(nx) * ny * nz, "label volume size mismatch");
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::kFaces6 && manhattan != 1) continue;
        offsets.push_back({dx, dy, dz});
      }

  std::vector<bool> visited(labels.size(), false);
  std::vector<RawSegment> segments;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < labels.size(); ++seed) {
    const auto label = labels.labels[seed];
    if (label == kUnlabeled || visited[seed]) continue;
    RawSegment seg{label, {}};
    visited[seed] = true;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      seg.voxels.push_back(cur);
      const int x = static_cast<int>(cur % static_cast<std::size_t>(nx));
      const int y = static_cast<int>((cur / static_cast<std::size_t>(nx)) % static_cast<std::size_t>(ny));
      const int z = static_cast<int>(cur / (static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)));
      for (const auto& o : offsets) {
        const int qx = x + o[0], qy = y + o[1], qz = z + o[2];
        if (qx < 0 || qy < 0 || qz < 0 || qx >= nx || qy >= ny || qz >= nz) continue;
        const std::size_t q = (static_cast<std::size_t>(qz) * ny + qy) * nx + qx;
        if (visited[q] || labels.labels[q] != label) continue;
        visited[q] = true;
        queue.push_back(q);
      }
    }
    if (seg.voxels.size() < min_size) continue;
    std::sort(seg.voxels.begin(), seg.voxels.end());
    segments.push_back(std::move(seg));
  }
  std::stable_sort(segments.begin(), segments.end(), [](const RawSegment& a, const RawSegment& b) {
    return std::make_tuple(a.class_id, -static_cast<long long>(a.voxels.size()), a.voxels.front()) <
           std::make_tuple(b.class_id, -static_cast<long long>(b.voxels.size()), b.voxels.front());
  });
  return segments;
}

/// One object of the inventory: a flood-fill component with its per-voxel
/// language features and the user's personalization state.
struct ObjectSegment {
  int id = 0;
  int class_id = 0;
  std::vector<std::size_t> voxels;
  Vec3 centroid = Vec3::Zero();
  std::vector<float> voxel_feats;  // voxels.size() * D, unit rows (zero if unobserved)
  std::string auto_name;
  std::optional<std::string> user_name;
  bool remembered = false;
  std::optional<int> insitu_class;

  /// Display label: the user's name when set, otherwise the automatic one.
  const std::string& label() const { return user_name ? *user_name : auto_name; }
  bool personalized() const { return remembered; }

  std::span<const float> voxel_feature(std::size_t k, int dim) const {
    return {voxel_feats.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  friend bool operator==(const ObjectSegment&, const ObjectSegment&) = default;
};

struct Inventory {
  std::vector<ObjectSegment> segments;
  std::vector<std::string> class_names;
  GridConfig grid;

  int feature_dim() const { return grid.feature_dim; }

  const ObjectSegment* find(int id) const {
    for (const auto& s : segments)
      if (s.id == id) return &s;
    return nullptr;
  }
  ObjectSegment* find(int id) {
    for (auto& s : segments)
      if (s.id == id) return &s;
    return nullptr;
  }

  /// Voxel -> segment id lookup (0 = none).
  std::vector<int> voxel_owner() const {
    std::vector<int> owner(grid.voxel_count(), 0);
    for (const auto& s : segments)
      for (auto v : s.voxels) owner[v] = s.id;
    return owner;
  }

  std::vector<const ObjectSegment*> personalized() const {
    std::vector<const ObjectSegment*> out;
    for (const auto& s : segments)
      if (s.personalized()) out.push_back(&s);
    return out;
  }

  void validate() const {
    std::map<int, int> ids;
    std::vector<bool> used(grid.voxel_count(), false);
    for (const auto& s : segments) {
      require(++ids[s.id] == 1, "duplicate segment id " + std::to_string(s.id));
      require(!s.voxels.empty(), "segment " + std::to_string(s.id) + " has no voxels");
      require(s.voxel_feats.size() == s.voxels.size() * static_cast<std::size_t>(feature_dim()),
              "segment " + std::to_string(s.id) + " feature count differs from voxel count");
      for (auto v : s.voxels) {
        require(v < used.size(), "segment voxel outside grid");
        require(!used[v], "voxel shared by two segments");
        used[v] = true;
      }
    }
  }

  friend bool operator==(const Inventory& a, const Inventory& b) {
    return a.segments == b.segments && a.class_names == b.class_names && a.grid.origin == b.grid.origin &&
           a.grid.voxel_size == b.grid.voxel_size && a.grid.dims == b.grid.dims &&
           a.grid.num_classes == b.grid.num_classes && a.grid.feature_dim == b.grid.feature_dim &&
           a.grid.truncation == b.grid.truncation;
  }
};

inline Vec3 segment_centroid(const GridConfig& grid, const std::vector<std::size_t>& voxels) {
  Vec3 sum = Vec3::Zero();
  for (auto v : voxels) sum += grid.voxel_center(grid.unravel(v));
  return sum / static_cast<double>(voxels.size());
}

/// Turns flood-fill components into inventory objects, copying normalized
/// per-voxel language features and naming each "className:k" with k counting
/// within its class in output order.
inline Inventory build_inventory(const std::vector<RawSegment>& segments, const MultiVolume& vol,
                                 std::vector<std::string> class_names) {
  require(static_cast<int>(class_names.size()) == vol.num_classes(),
          "class name count differs from volume class count");
  Inventory inv;
  inv.class_names = std::move(class_names);
  inv.grid = vol.config();
  const auto dim = static_cast<std::size_t>(vol.feature_dim());
  std::map<int, int> per_class;
  int next_id = 1;
  for (const auto& raw : segments) {
    require(raw.class_id >= 0 && raw.class_id < vol.num_classes(), "segment class out of range");
    require(!raw.voxels.empty(), "empty raw segment");
    ObjectSegment seg;
    seg.id = next_id++;
    seg.class_id = raw.class_id;
    seg.voxels = raw.voxels;
    seg.voxel_feats.reserve(raw.voxels.size() * dim);
    for (auto v : raw.voxels) {
      if (v >= vol.size()) fail(ErrorKind::kInvalidArgument, "segment references voxel outside the grid");
      auto f = vol.normalized_lang_feat(v);
      seg.voxel_feats.insert(seg.voxel_feats.end(), f.begin(), f.end());
    }
    seg.centroid = segment_centroid(inv.grid, seg.voxels);
    seg.auto_name = inv.class_names[static_cast<std::size_t>(raw.class_id)] + ":" +
                    std::to_string(++per_class[raw.class_id]);
    inv.segments.push_back(std::move(seg));
  }
  return inv;
}

}  // namespace vlfuse
