#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "vlfuse/error.hpp"
#include "vlfuse/geometry.hpp"
#include "vlfuse/io/png.hpp"

namespace vlfuse {

/// Coarse patch lattice of language features over an image. Patch (r, s)
/// covers pixels [s*stride, s*stride + patch_size) horizontally and the
/// analogous rows vertically; its center is the lattice point.
class CoarseFeatureMap {
 public:
  CoarseFeatureMap() = default;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int dim() const { return dim_; }
  int patch_size() const { return patch_size_; }
  int stride() const { return stride_; }
  int image_width() const { return image_w_; }
  int image_height() const { return image_h_; }
  bool empty() const { return values_.empty(); }

  std::span<const float> patch(int r, int s) const {
    return {values_.data() + (static_cast<std::size_t>(r) * cols_ + s) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  std::span<const float> values() const { return values_; }

  /// Pixel coordinate (pixel centers at integers) of patch column s / row r.
  double center_x(int s) const { return s * stride_ + (patch_size_ - 1) * 0.5; }
  double center_y(int r) const { return r * stride_ + (patch_size_ - 1) * 0.5; }

  static int lattice_count(int image_extent, int patch_size, int stride) {
    return (image_extent - patch_size) / stride + 1;
  }

  friend CoarseFeatureMap build_coarse_map(std::vector<float>, int, int, int, int, int, int, int);

 private:
  int rows_ = 0;
  int cols_ = 0;
  int dim_ = 0;
  int patch_size_ = 0;
  int stride_ = 0;
  int image_w_ = 0;
  int image_h_ = 0;
  std::vector<float> values_;
};

/// Builds a coarse map from an R x S x D patch array (row-major), renormalizing
/// each patch vector to unit length.
inline CoarseFeatureMap build_coarse_map(std::vector<float> patch_features, int rows, int cols,
                                         int dim, int patch_size, int stride, int image_w,
                                         int image_h) {
  require(patch_size >= 1 && stride >= 1, "patch_size and stride must be positive");
  require(stride <= patch_size, "stride must not exceed patch_size (patches must overlap or touch)");
  require(image_w >= patch_size && image_h >= patch_size, "image smaller than one patch");
  require(dim >= 1, "feature dim must be positive");
  const int expect_cols = CoarseFeatureMap::lattice_count(image_w, patch_size, stride);
  const int expect_rows = CoarseFeatureMap::lattice_count(image_h, patch_size, stride);
  require(rows == expect_rows && cols == expect_cols,
          "patch grid " + std::to_string(rows) + "x" + std::to_string(cols) +
              " inconsistent with tiling, expected " + std::to_string(expect_rows) + "x" +
              std::to_string(expect_cols));
  require(patch_features.size() == static_cast<std::size_t>(rows) * cols * dim,
          "patch feature array has wrong size");
  for (std::size_t p = 0; p < static_cast<std::size_t>(rows) * cols; ++p) {
    auto* v = patch_features.data() + p * dim;
    double n2 = 0.0;
    for (int k = 0; k < dim; ++k) n2 += static_cast<double>(v[k]) * v[k];
    require(n2 > 0.0 && std::isfinite(n2), "patch feature with zero or non-finite norm");
    const double inv = 1.0 / std::sqrt(n2);
    for (int k = 0; k < dim; ++k) v[k] = static_cast<float>(v[k] * inv);
  }
  CoarseFeatureMap m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.dim_ = dim;
  m.patch_size_ = patch_size;
  m.stride_ = stride;
  m.image_w_ = image_w;
  m.image_h_ = image_h;
  m.values_ = std::move(patch_features);
  return m;
}

namespace detail {

/// Bilinear lookup on an integer lattice with border clamping. `fetch(r, c)`
/// returns a span of `dim` floats; the result accumulates into `out`.
template <typename Fetch>
void bilinear(double gx, double gy, int rows, int cols, int dim, Fetch&& fetch,
              std::span<float> out) {
  gx = std::clamp(gx, 0.0, static_cast<double>(cols - 1));
  gy = std::clamp(gy, 0.0, static_cast<double>(rows - 1));
  const int c0 = std::min(static_cast<int>(std::floor(gx)), cols - 1);
  const int r0 = std::min(static_cast<int>(std::floor(gy)), rows - 1);
  const int c1 = std::min(c0 + 1, cols - 1);
  const int r1 = std::min(r0 + 1, rows - 1);
  const double tx = gx - c0;
  const double ty = gy - r0;
  const double w00 = (1 - tx) * (1 - ty), w01 = tx * (1 - ty), w10 = (1 - tx) * ty, w11 = tx * ty;
  auto a = fetch(r0, c0), b = fetch(r0, c1), c = fetch(r1, c0), d = fetch(r1, c1);
  for (int k = 0; k < dim; ++k) {
    out[static_cast<std::size_t>(k)] = static_cast<float>(w00 * a[k] + w01 * b[k] + w10 * c[k] + w11 * d[k]);
  }
}

}  // namespace detail

/// Continuous language feature at an image point by bilinear interpolation
/// over patch centers; points beyond the outermost centers clamp to the border.
inline std::vector<float> sample_coarse(const CoarseFeatureMap& map, const Vec2& pixel) {
  std::vector<float> out(static_cast<std::size_t>(map.dim()));
  const double c0 = (map.patch_size() - 1) * 0.5;
  const double gx = (pixel.x() - c0) / map.stride();
  const double gy = (pixel.y() - c0) / map.stride();
  detail::bilinear(gx, gy, map.rows(), map.cols(), map.dim(),
                   [&](int r, int s) { return map.patch(r, s); }, out);
  return out;
}

/// Per-pixel class distribution, H x W x C.
struct SemanticMap {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<float> probs;

  std::span<const float> at(int x, int y) const {
    return {probs.data() + (static_cast<std::size_t>(y) * width + x) * num_classes,
            static_cast<std::size_t>(num_classes)};
  }

  /// Expands a label image (label < 0 = no semantics) with per-pixel confidence.
  /// The remaining mass is spread evenly over the other classes.
  static SemanticMap from_labels(int width, int height, int num_classes, std::span<const int> labels,
                                 std::span<const float> confidence = {}) {
    require(labels.size() == static_cast<std::size_t>(width) * height, "label image size mismatch");
    SemanticMap m{width, height, num_classes,
                  std::vector<float>(static_cast<std::size_t>(width) * height * num_classes, 0.0f)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int l = labels[i];
      if (l < 0) continue;
      require(l < num_classes, "label out of range");
      const float conf = confidence.empty() ? 1.0f : confidence[i];
      auto* row = m.probs.data() + i * num_classes;
      const float rest = num_classes > 1 ? (1.0f - conf) / static_cast<float>(num_classes - 1) : 0.0f;
      for (int c = 0; c < num_classes; ++c) row[c] = (c == l) ? (num_classes > 1 ? conf : 1.0f) : rest;
    }
    return m;
  }
};

inline std::vector<float> sample_semantics(const SemanticMap& map, const Vec2& pixel) {
  std::vector<float> out(static_cast<std::size_t>(map.num_classes));
  detail::bilinear(pixel.x(), pixel.y(), map.height, map.width, map.num_classes,
                   [&](int r, int c) { return map.at(c, r); }, out);
  return out;
}

/// One posed RGB-D observation with its semantic and coarse language maps.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // meters, 0 = invalid
  Intrinsics intrinsics;
  Pose pose;
  SemanticMap semantics;
  CoarseFeatureMap coarse;
  float view_weight = 1.0f;
  std::optional<io::Rgb8Image> rgb;

  float depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }

  /// Pixel coordinates of a camera-space point (pixel centers at integers).
  Vec2 project(const Vec3& cam) const {
    return {intrinsics.fx * cam.x() / cam.z() + intrinsics.cx,
            intrinsics.fy * cam.y() / cam.z() + intrinsics.cy};
  }

  void validate(int num_classes, int feature_dim) const {
    require(width > 0 && height > 0, "frame has empty image");
    require(depth.size() == static_cast<std::size_t>(width) * height, "depth size mismatch");
    require(view_weight > 0.0f && std::isfinite(view_weight), "view_weight must be positive");
    require(semantics.width == width && semantics.height == height,
            "semantic map size differs from depth size");
    require(semantics.num_classes == num_classes, "semantic map class count differs from volume");
    require(semantics.probs.size() == static_cast<std::size_t>(width) * height * num_classes,
            "semantic map storage size mismatch");
    require(coarse.image_width() == width && coarse.image_height() == height,
            "coarse feature map image size differs from depth size");
    require(coarse.dim() == feature_dim, "coarse feature dim differs from volume");
    require(intrinsics.fx > 0 && intrinsics.fy > 0, "focal lengths must be positive");
  }
};

}  // namespace vlfuse
