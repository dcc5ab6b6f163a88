#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlfuse/error.hpp"
#include "vlfuse/geometry.hpp"

namespace vlfuse {

/// Dense grid layout plus the channel widths it carries.
struct GridConfig {
  Vec3 origin = Vec3::Zero();  // center of voxel (0,0,0), meters
  double voxel_size = 0.04;
  std::array<int, 3> dims{1, 1, 1};
  int num_classes = 1;
  int feature_dim = 1;
  double truncation = 0.12;

  /// Truncation defaults to three voxels.
  static GridConfig make(const Vec3& origin, double voxel_size, std::array<int, 3> dims,
                         int num_classes, int feature_dim) {
    GridConfig c;
    c.origin = origin;
    c.voxel_size = voxel_size;
    c.dims = dims;
    c.num_classes = num_classes;
    c.feature_dim = feature_dim;
    c.truncation = 3.0 * voxel_size;
    return c;
  }

  void validate() const {
    require(std::isfinite(voxel_size) && voxel_size > 0.0, "voxel_size must be positive");
    require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, "grid dims must be >= 1");
    require(num_classes >= 1, "num_classes must be >= 1");
    require(feature_dim >= 1, "feature_dim must be >= 1");
    require(truncation >= voxel_size, "truncation must be >= voxel_size");
    require(origin.allFinite(), "grid origin must be finite");
  }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }

  bool contains(const Index3& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims[0] && v.y < dims[1] && v.z < dims[2];
  }

  /// x varies fastest.
  std::size_t linear(const Index3& v) const {
    return (static_cast<std::size_t>(v.z) * static_cast<std::size_t>(dims[1]) +
            static_cast<std::size_t>(v.y)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(v.x);
  }

  Index3 unravel(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return Index3{static_cast<int>(i % nx), static_cast<int>((i / nx) % ny),
                  static_cast<int>(i / (nx * ny))};
  }

  Vec3 voxel_center(const Index3& v) const {
    return origin + voxel_size * Vec3(v.x, v.y, v.z);
  }

  /// Continuous grid coordinate of a world point (voxel centers at integers).
  Vec3 to_grid(const Vec3& p) const { return (p - origin) / voxel_size; }

  /// Channel storage in bytes: tsdf, weight, feature weight, C class probs, D features.
  std::size_t storage_bytes() const {
    const std::size_t per_voxel =
        3 + static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(feature_dim);
    return voxel_count() * per_voxel * sizeof(float);
  }
};

inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{4} << 30;

/// Minimum accumulated semantic weight (one full observation) before a voxel
/// or vertex gets a class label.
inline constexpr float kMinLabelWeight = 1.0f;

/// Multi-channel voxel grid: geometry (tsdf, weight), semantics (class
/// distribution) and language features.
///
/// Geometry and feature channels keep separate accumulated weights because
/// features are fused only inside the truncation band. Each feature channel is
/// the running mean of the samples it actually received.
class MultiVolume {
 public:
  explicit MultiVolume(const GridConfig& config)
      : config_(config),
        tsdf_(config.voxel_count(), 1.0f),
        weight_(config.voxel_count(), 0.0f),
        feat_weight_(config.voxel_count(), 0.0f),
        class_probs_(config.voxel_count() * static_cast<std::size_t>(config.num_classes), 0.0f),
        lang_feat_(config.voxel_count() * static_cast<std::size_t>(config.feature_dim), 0.0f) {}

  const GridConfig& config() const { return config_; }
  std::size_t size() const { return tsdf_.size(); }
  int num_classes() const { return config_.num_classes; }
  int feature_dim() const { return config_.feature_dim; }

  float& tsdf(std::size_t i) { return tsdf_[i]; }
  float tsdf(std::size_t i) const { return tsdf_[i]; }
  float& weight(std::size_t i) { return weight_[i]; }
  float weight(std::size_t i) const { return weight_[i]; }
  float& feature_weight(std::size_t i) { return feat_weight_[i]; }
  float feature_weight(std::size_t i) const { return feat_weight_[i]; }

  std::span<float> class_probs(std::size_t i) {
    return {class_probs_.data() + i * static_cast<std::size_t>(config_.num_classes),
            static_cast<std::size_t>(config_.num_classes)};
  }
  std::span<const float> class_probs(std::size_t i) const {
    return {class_probs_.data() + i * static_cast<std::size_t>(config_.num_classes),
            static_cast<std::size_t>(config_.num_classes)};
  }
  std::span<float> lang_feat(std::size_t i) {
    return {lang_feat_.data() + i * static_cast<std::size_t>(config_.feature_dim),
            static_cast<std::size_t>(config_.feature_dim)};
  }
  std::span<const float> lang_feat(std::size_t i) const {
    return {lang_feat_.data() + i * static_cast<std::size_t>(config_.feature_dim),
            static_cast<std::size_t>(config_.feature_dim)};
  }

  /// Class distribution renormalized to sum 1; all zeros if never observed.
  std::vector<float> normalized_class_probs(std::size_t i) const {
    auto p = class_probs(i);
    std::vector<float> out(p.begin(), p.end());
    double total = 0.0;
    for (float v : out) total += v;
    if (total > 0.0)
      for (float& v : out) v = static_cast<float>(v / total);
    return out;
  }

  /// Language feature with unit L2 norm; zero vector if never observed.
  std::vector<float> normalized_lang_feat(std::size_t i) const {
    auto f = lang_feat(i);
    std::vector<float> out(f.begin(), f.end());
    double n2 = 0.0;
    for (float v : out) n2 += static_cast<double>(v) * v;
    if (n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      for (float& v : out) v = static_cast<float>(v * inv);
    }
    return out;
  }

  std::span<const float> tsdf_channel() const { return tsdf_; }
  std::span<const float> weight_channel() const { return weight_; }
  std::span<const float> feature_weight_channel() const { return feat_weight_; }
  std::span<const float> class_prob_channel() const { return class_probs_; }
  std::span<const float> lang_feat_channel() const { return lang_feat_; }
  std::span<float> tsdf_channel() { return tsdf_; }
  std::span<float> weight_channel() { return weight_; }
  std::span<float> feature_weight_channel() { return feat_weight_; }
  std::span<float> class_prob_channel() { return class_probs_; }
  std::span<float> lang_feat_channel() { return lang_feat_; }

 private:
  GridConfig config_;
  std::vector<float> tsdf_;
  std::vector<float> weight_;
  std::vector<float> feat_weight_;
  std::vector<float> class_probs_;
  std::vector<float> lang_feat_;
};

/// Allocates an empty volume, refusing grids whose channels exceed `budget_bytes`.
inline MultiVolume new_volume(const GridConfig& config,
                              std::size_t budget_bytes = kDefaultMemoryBudget) {
  config.validate();
  if (config.storage_bytes() > budget_bytes) {
    fail(ErrorKind::kBudgetExceeded,
         "volume needs " + std::to_string(config.storage_bytes()) + " bytes, budget is " +
             std::to_string(budget_bytes));
  }
  return MultiVolume(config);
}

}  // namespace vlfuse
