#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlfuse/embedder.hpp"
#include "vlfuse/mesh.hpp"
#include "vlfuse/meshing.hpp"
#include "vlfuse/segmentation.hpp"

namespace vlfuse {

inline constexpr double kDefaultTemperature = 0.07;

struct QueryEmbedding {
  std::string text;
  std::vector<float> vector;

  static QueryEmbedding from_text(const TextEmbedder& embedder, std::string text) {
    require(!text.empty(), "query text is empty");
    auto v = embedder.embed(text);
    normalize_in_place(v);
    return {std::move(text), std::move(v)};
  }
};

struct NegativeSet {
  struct Entry {
    std::string name;
    std::vector<float> vector;
  };
  std::vector<Entry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

/// One negative per distinct class name present in the inventory, plus any
/// caller-supplied extras, embedded with the query embedder.
inline NegativeSet build_negative_set(const Inventory& inv, const TextEmbedder& embedder,
                                      const std::vector<std::string>& extra_negatives = {}) {
  std::set<int> classes;
  for (const auto& s : inv.segments) classes.insert(s.class_id);
  NegativeSet out;
  std::set<std::string> seen;
  auto add = [&](const std::string& name) {
    if (!seen.insert(name).second) return;
    auto v = embedder.embed(name);
    normalize_in_place(v);
    out.entries.push_back({name, std::move(v)});
  };
  for (int c : classes) add(inv.class_names.at(static_cast<std::size_t>(c)));
  for (const auto& name : extra_negatives) add(name);
  return out;
}

namespace detail {

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<double>(a[k]) * b[k];
    na += static_cast<double>(a[k]) * a[k];
    nb += static_cast<double>(b[k]) * b[k];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace detail

/// Softmax share of the query among {query} plus negatives, at temperature tau:
/// exp(s+/tau) / (exp(s+/tau) + sum_j exp(s_j/tau)), with s = cosine similarity.
inline double relative_score(std::span<const float> feature, const QueryEmbedding& q, const NegativeSet& negs,
                             double temperature) {
  const double pos = detail::cosine(feature, q.vector) / temperature;
  double m = pos;
  std::vector<double> logits;
  logits.reserve(negs.size());
  for (const auto& n : negs.entries) {
    logits.push_back(detail::cosine(feature, n.vector) / temperature);
    m = std::max(m, logits.back());
  }
  double denom = std::exp(pos - m);
  const double num = denom;
  for (double l : logits) denom += std::exp(l - m);
  return num / denom;
}

/// Per-row relative score over a flat feature array (voxel-level scoring).
inline std::vector<float> score_features(std::span<const float> features, int dim, const QueryEmbedding& q,
                                         const NegativeSet& negs, double temperature = kDefaultTemperature) {
  require(temperature > 0.0, "temperature must be positive");
  require(static_cast<int>(q.vector.size()) == dim, "query dim differs from feature dim");
  for (const auto& n : negs.entries) require(static_cast<int>(n.vector.size()) == dim, "negative dim differs");
  const std::size_t rows = features.size() / static_cast<std::size_t>(dim);
  std::vector<float> heat(rows);
  for (std::size_t r = 0; r < rows; ++r)
    heat[r] = static_cast<float>(relative_score(features.subspan(r * dim, static_cast<std::size_t>(dim)), q, negs, temperature));
  return heat;
}

inline std::vector<float> score_vertices(const Mesh& mesh, const QueryEmbedding& q, const NegativeSet& negs,
                                         double temperature = kDefaultTemperature) {
  if (!mesh.vertices.empty() && !mesh.has_features())
    fail(ErrorKind::kInvalidArgument, "mesh has no vertex features");
  return score_features(mesh.vertex_feats, mesh.feature_dim, q, negs, temperature);
}

/// Linear-interpolated percentile of sorted data, p in [0, 100].
inline double percentile_sorted(const std::vector<float>& sorted, double p) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Display heat: clip to the 5th..95th percentile band, then min-max rescale.
inline std::vector<float> normalize_heat(const std::vector<float>& heat) {
  std::vector<float> out(heat.size(), 0.0f);
  if (heat.empty()) return out;
  std::vector<float> sorted = heat;
  std::sort(sorted.begin(), sorted.end());
  const double lo = percentile_sorted(sorted, 5.0);
  const double hi = percentile_sorted(sorted, 95.0);
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < heat.size(); ++i)
    out[i] = static_cast<float>((std::clamp<double>(heat[i], lo, hi) - lo) / (hi - lo));
  return out;
}

/// Segment owning a mesh vertex: the segment with the largest trilinear
/// weight among the vertex's cell corners (0 if none).
inline std::vector<int> vertex_segments(const Mesh& mesh, const Inventory& inv) {
  const auto owner = inv.voxel_owner();
  std::vector<int> out(mesh.vertices.size(), 0);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const auto s = detail::trilinear_stencil(inv.grid, mesh.vertices[v].cast<double>());
    std::vector<std::pair<int, double>> acc;
    for (int c = 0; c < 8; ++c) {
      const int id = owner[s.index[static_cast<std::size_t>(c)]];
      if (id == 0) continue;
      auto it = std::find_if(acc.begin(), acc.end(), [&](const auto& e) { return e.first == id; });
      if (it == acc.end()) acc.emplace_back(id, s.weight[static_cast<std::size_t>(c)] + 1e-12);
      else it->second += s.weight[static_cast<std::size_t>(c)] + 1e-12;
    }
    if (acc.empty()) continue;
    out[v] = std::max_element(acc.begin(), acc.end(), [](const auto& a, const auto& b) {
               return a.second < b.second || (a.second == b.second && a.first > b.first);
             })->first;
  }
  return out;
}

struct RankedSegment {
  int segment_id = 0;
  std::string label;
  double mean_heat = 0.0;
  std::size_t vertex_count = 0;
};

/// Segments ordered by mean vertex heat, highest first.
inline std::vector<RankedSegment> rank_segments(const Mesh& mesh, const std::vector<float>& heat, const Inventory& inv) {
  require(heat.size() == mesh.vertices.size(), "heat size differs from vertex count");
  const auto owners = vertex_segments(mesh, inv);
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t v = 0; v < owners.size(); ++v) {
    if (owners[v] == 0) continue;
    auto& a = acc[owners[v]];
    a.first += heat[v];
    a.second += 1;
  }
  std::vector<RankedSegment> out;
  for (const auto& [id, a] : acc) out.push_back({id, inv.find(id)->label(), a.first / static_cast<double>(a.second), a.second});
  std::stable_sort(out.begin(), out.end(), [](const RankedSegment& a, const RankedSegment& b) { return a.mean_heat > b.mean_heat; });
  return out;
}

struct QueryResult {
  std::string text;
  double temperature = kDefaultTemperature;
  std::vector<std::string> negatives;
  std::vector<float> heat;          // raw relative scores per vertex
  std::vector<float> display_heat;  // percentile-clipped to [0, 1]
  std::vector<RankedSegment> ranked;
};

inline QueryResult run_query(const Mesh& mesh, const Inventory& inv, const TextEmbedder& embedder, const std::string& text,
                             double temperature = kDefaultTemperature, const std::vector<std::string>& extra_negatives = {}) {
  require(std::isfinite(temperature) && temperature > 0.0, "temperature must be positive");
  require(embedder.dim() == mesh.feature_dim, "embedding dim differs from mesh feature dim");
  const auto q = QueryEmbedding::from_text(embedder, text);
  const auto negs = build_negative_set(inv, embedder, extra_negatives);
  QueryResult out;
  out.text = text;
  out.temperature = temperature;
  for (const auto& e : negs.entries) out.negatives.push_back(e.name);
  out.heat = score_vertices(mesh, q, negs, temperature);
  out.display_heat = normalize_heat(out.heat);
  out.ranked = rank_segments(mesh, out.heat, inv);
  return out;
}

inline nlohmann::json ranked_to_json(const std::vector<RankedSegment>& ranked) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : ranked)
    out.push_back({{"segment_id", r.segment_id}, {"label", r.label}, {"mean_heat", r.mean_heat}, {"vertex_count", r.vertex_count}});
  return out;
}

}  // namespace vlfuse
