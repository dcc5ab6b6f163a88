#pragma once

// Volumetric diff: which personalized objects of a previous scan can be
// re-identified in the current one, and which are missing. Matching uses only
// the in-situ classifier, never spatial position.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlfuse/insitu/train.hpp"

namespace vlfuse {

struct UnchangedEntry {
  std::string label;
  int prev_segment = 0;
  int curr_segment = 0;
  double confidence = 0.0;
};

struct MissingEntry {
  std::string label;
  int prev_segment = 0;
  Vec3 prev_centroid = Vec3::Zero();
};

struct DiffReport {
  int prev_version = 0;
  int curr_version = 0;
  std::vector<UnchangedEntry> unchanged;
  std::vector<MissingEntry> missing;
};

struct DiffOptions {
  int votes = insitu::kDefaultVotes;
  int graph_nodes = insitu::kDefaultGraphNodes;
  std::uint64_t seed = 0;
};

/// Classifies every current segment, then hands each previous personalized
/// label to at most one current segment, highest confidence first (ties by
/// lower segment id).
inline DiffReport diff_versions(const insitu::EdgeConvModel<float>& model, const Inventory& prev, const Inventory& curr,
                                const DiffOptions& opts = {}, int prev_version = 0, int curr_version = 0) {
  DiffReport report{prev_version, curr_version, {}, {}};
  // First segment per label wins when two personalized segments share a label.
  std::map<std::string, const ObjectSegment*> wanted;
  std::vector<std::string> order;
  for (const auto* s : prev.personalized())
    if (wanted.emplace(s->label(), s).second) order.push_back(s->label());
  if (order.empty()) return report;

  for (const auto& label : order)
    if (!model.registry().index_of(label))
      fail(ErrorKind::kConflict, "model registry has no class for personalized label '" + label + "'");
  require(model.config().input_dim == curr.feature_dim(), "model input dim differs from current inventory");

  struct Claim {
    std::string label;
    int segment = 0;
    double confidence = 0.0;
  };
  std::vector<Claim> claims;
  insitu::Rng rng(opts.seed);
  for (const auto& seg : curr.segments) {
    const auto c = insitu::classify_segment(model, seg, curr.feature_dim(), opts.votes, rng, opts.graph_nodes);
    if (c.class_index && wanted.count(c.label)) claims.push_back({c.label, seg.id, c.confidence});
  }
  std::stable_sort(claims.begin(), claims.end(), [](const Claim& a, const Claim& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.segment < b.segment;
  });
  std::map<std::string, Claim> taken;
  std::set<int> used_segments;
  for (const auto& c : claims) {
    if (taken.count(c.label) || used_segments.count(c.segment)) continue;
    taken.emplace(c.label, c);
    used_segments.insert(c.segment);
  }
  for (const auto& label : order) {
    const auto* s = wanted.at(label);
    if (auto it = taken.find(label); it != taken.end())
      report.unchanged.push_back({label, s->id, it->second.segment, it->second.confidence});
    else
      report.missing.push_back({label, s->id, s->centroid});
  }
  return report;
}

inline nlohmann::json diff_to_json(const DiffReport& r) {
  nlohmann::json unchanged = nlohmann::json::array();
  for (const auto& u : r.unchanged)
    unchanged.push_back({{"label", u.label}, {"prev_segment", u.prev_segment}, {"curr_segment", u.curr_segment},
                         {"confidence", u.confidence}});
  nlohmann::json missing = nlohmann::json::array();
  for (const auto& m : r.missing)
    missing.push_back({{"label", m.label},
                       {"prev_segment", m.prev_segment},
                       {"prev_centroid", {m.prev_centroid.x(), m.prev_centroid.y(), m.prev_centroid.z()}}});
  return {{"prev_version", r.prev_version}, {"curr_version", r.curr_version}, {"unchanged", unchanged}, {"missing", missing}};
}

}  // namespace vlfuse
