#pragma once

// User personalization actions on an inventory: merge, rename, remember.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "vlfuse/segmentation.hpp"

namespace vlfuse {

namespace detail {

inline ObjectSegment& segment_or_throw(Inventory& inv, int id) {
  auto* s = inv.find(id);
  if (!s) fail(ErrorKind::kNotFound, "unknown segment id " + std::to_string(id));
  return *s;
}

}  // namespace detail

/// Folds every listed segment into the first one. The survivor keeps its id
/// and class; voxels stay sorted by linear index with their features aligned.
/// An empty name keeps the survivor's current label.
inline ObjectSegment& apply_merge(Inventory& inv, const std::vector<int>& segment_ids, const std::string& name) {
  if (segment_ids.size() < 2) fail(ErrorKind::kInvalidArgument, "merge needs at least two segment ids");
  std::set<int> unique(segment_ids.begin(), segment_ids.end());
  if (unique.size() != segment_ids.size()) fail(ErrorKind::kInvalidArgument, "duplicate segment id in merge request");
  for (int id : segment_ids) detail::segment_or_throw(inv, id);

  const auto dim = static_cast<std::size_t>(inv.feature_dim());
  std::vector<std::pair<std::size_t, const float*>> entries;
  for (int id : segment_ids) {
    const auto& s = *inv.find(id);
    for (std::size_t k = 0; k < s.voxels.size(); ++k) entries.emplace_back(s.voxels[k], s.voxel_feats.data() + k * dim);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> voxels;
  std::vector<float> feats;
  voxels.reserve(entries.size());
  feats.reserve(entries.size() * dim);
  for (const auto& [v, f] : entries) {
    voxels.push_back(v);
    feats.insert(feats.end(), f, f + dim);
  }

  auto& survivor = detail::segment_or_throw(inv, segment_ids.front());
  survivor.voxels = std::move(voxels);
  survivor.voxel_feats = std::move(feats);
  survivor.centroid = segment_centroid(inv.grid, survivor.voxels);
  if (!name.empty()) survivor.user_name = name;
  survivor.remembered = true;
  const int survivor_id = survivor.id;
  std::erase_if(inv.segments, [&](const ObjectSegment& s) { return s.id != survivor_id && unique.count(s.id); });
  return *inv.find(survivor_id);
}

inline ObjectSegment& apply_rename(Inventory& inv, int segment_id, const std::string& name) {
  auto& s = detail::segment_or_throw(inv, segment_id);
  if (name.empty()) fail(ErrorKind::kInvalidArgument, "name must be non-empty");
  s.user_name = name;
  s.remembered = true;
  return s;
}

inline ObjectSegment& apply_remember(Inventory& inv, int segment_id) {
  auto& s = detail::segment_or_throw(inv, segment_id);
  s.remembered = true;
  return s;
}

}  // namespace vlfuse
