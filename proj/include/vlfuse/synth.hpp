#pragma once

// Procedural desk-scale scenes rendered analytically into posed RGB-D frames
// with semantic maps and coarse language maps, plus brute-force oracles. No
// learned model is involved anywhere: object "language features" are fixed
// signature vectors.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlfuse/frame.hpp"
#include "vlfuse/io/frameset.hpp"
#include "vlfuse/io/vlf.hpp"
#include "vlfuse/segmentation.hpp"

namespace vlfuse::synth {

enum class Shape { kBox, kSphere };

struct SynthObject {
  Shape shape = Shape::kBox;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Constant(0.1);  // sphere: radius in x
  int class_id = 0;
  std::string name;
  std::vector<float> signature;  // unit D-vector

  double radius() const { return half_extents.x(); }

  /// Signed distance from a point to the shape surface (negative inside).
  double sdf(const Vec3& p) const {
    if (shape == Shape::kSphere) return (p - center).norm() - radius();
    const Vec3 q = (p - center).cwiseAbs() - half_extents;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }

  /// Nearest positive ray parameter t for origin + t * dir, if any.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const {
    if (shape == Shape::kSphere) {
      const Vec3 oc = origin - center;
      const double a = dir.squaredNorm();
      const double b = 2.0 * oc.dot(dir);
      const double c = oc.squaredNorm() - radius() * radius();
      const double disc = b * b - 4 * a * c;
      if (disc < 0) return std::nullopt;
      const double s = std::sqrt(disc);
      const double t0 = (-b - s) / (2 * a);
      const double t1 = (-b + s) / (2 * a);
      if (t0 > 1e-9) return t0;
      if (t1 > 1e-9) return t1;
      return std::nullopt;
    }
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double lo = center[a] - half_extents[a];
      const double hi = center[a] + half_extents[a];
      if (std::abs(dir[a]) < 1e-15) {
        if (origin[a] < lo || origin[a] > hi) return std::nullopt;
        continue;
      }
      double t0 = (lo - origin[a]) / dir[a];
      double t1 = (hi - origin[a]) / dir[a];
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
    }
    if (tmax < tmin) return std::nullopt;
    if (tmin > 1e-9) return tmin;
    if (tmax > 1e-9) return tmax;
    return std::nullopt;
  }
};

struct CameraModel {
  int width = 160;
  int height = 120;
  double fx = 120.0;
  double fy = 120.0;
  int patch_size = 16;
  int stride = 8;

  Intrinsics intrinsics() const { return {fx, fy, (width - 1) * 0.5, (height - 1) * 0.5}; }
};

struct OrbitModel {
  double radius = 2.6;
  double height = 1.6;           // mean camera height above the look-at target
  double height_swing = 0.0;     // +- variation of the height around the orbit
  int swing_cycles = 3;
  double phase = 0.0;            // radians, start angle
};

struct SynthScene {
  std::vector<SynthObject> objects;
  Vec3 room_min = Vec3(-1.8, -1.8, 0.0);
  Vec3 room_max = Vec3(1.8, 1.8, 1.2);
  bool has_floor = true;
  int floor_class = 0;
  std::vector<std::string> class_names;
  std::vector<float> background_signature;
  int feature_dim = 16;
  double noise_sigma = 0.0;
  Vec3 look_at = Vec3(0, 0, 0.2);
  CameraModel camera;
  OrbitModel orbit;

  int num_classes() const { return static_cast<int>(class_names.size()); }

  void validate() const {
    if (objects.empty()) fail(ErrorKind::kInvalidArgument, "degenerate synthetic scene: no objects");
    require(feature_dim >= 1, "feature_dim must be positive");
    require(static_cast<int>(background_signature.size()) == feature_dim, "background signature has wrong dim");
    for (const auto& o : objects) {
      require(static_cast<int>(o.signature.size()) == feature_dim, "object signature has wrong dim");
      require(o.class_id >= 0 && o.class_id < num_classes(), "object class out of range");
    }
  }
};

/// `count` unit vectors, mutually orthogonal when count <= dim (Gram-Schmidt
/// over Gaussian draws).
inline std::vector<std::vector<float>> orthogonal_signatures(int count, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> basis;
  std::vector<std::vector<float>> out;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd v(dim);
    for (int k = 0; k < dim; ++k) v[k] = normal(rng);
    if (i < dim)
      for (const auto& b : basis) v -= v.dot(b) * b;
    v.normalize();
    basis.push_back(v);
    std::vector<float> f(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) f[static_cast<std::size_t>(k)] = static_cast<float>(v[k]);
    out.push_back(std::move(f));
  }
  return out;
}

/// A single sphere with no floor, centered at the origin.
inline SynthScene sphere_scene(double radius = 0.5, int feature_dim = 8, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  auto sigs = orthogonal_signatures(2, feature_dim, rng);
  SynthScene s;
  s.has_floor = false;
  s.class_names = {"background", "ball"};
  s.floor_class = 0;
  s.feature_dim = feature_dim;
  s.background_signature = sigs[1];
  s.objects.push_back({Shape::kSphere, Vec3::Zero(), Vec3::Constant(radius), 1, "ball", sigs[0]});
  s.room_min = Vec3::Constant(-radius * 1.5);
  s.room_max = Vec3::Constant(radius * 1.5);
  s.look_at = Vec3::Zero();
  s.orbit = {2.2, 0.0, 1.3, 3, 0.0};
  return s;
}

/// Objects on a floor arranged in a ring around the room center; each gets an
/// orthogonal signature. Classes cycle through a small vocabulary so some
/// classes repeat.
inline SynthScene ring_scene(int num_objects, int feature_dim, double noise_sigma, std::uint64_t seed,
                             bool with_floor = true, double ring_radius = 1.1) {
  require(num_objects >= 1, "need at least one object");
  static const std::vector<std::string> vocab = {"chair", "table", "bottle", "lamp", "plant"};
  std::mt19937_64 rng(seed);
  auto sigs = orthogonal_signatures(num_objects + 1, feature_dim, rng);
  SynthScene s;
  s.feature_dim = feature_dim;
  s.noise_sigma = noise_sigma;
  s.has_floor = with_floor;
  s.class_names = {with_floor ? "floor" : "background"};
  const int vocab_used = std::min<int>(num_objects, static_cast<int>(vocab.size()));
  for (int i = 0; i < vocab_used; ++i) s.class_names.push_back(vocab[static_cast<std::size_t>(i)]);
  s.floor_class = 0;
  s.background_signature = sigs[static_cast<std::size_t>(num_objects)];
  std::uniform_real_distribution<double> size(0.16, 0.22);
  std::uniform_real_distribution<double> height(0.16, 0.3);
  for (int i = 0; i < num_objects; ++i) {
    const double ang = 2.0 * std::numbers::pi * i / num_objects;
    SynthObject o;
    o.shape = (i % 3 == 2) ? Shape::kSphere : Shape::kBox;
    if (o.shape == Shape::kSphere) {
      const double r = size(rng);
      o.half_extents = Vec3::Constant(r);
      o.center = Vec3(ring_radius * std::cos(ang), ring_radius * std::sin(ang), r);
    } else {
      o.half_extents = Vec3(size(rng), size(rng), height(rng));
      o.center = Vec3(ring_radius * std::cos(ang), ring_radius * std::sin(ang), o.half_extents.z());
    }
    o.class_id = 1 + i % vocab_used;
    o.name = "object:" + std::to_string(i);
    o.signature = sigs[static_cast<std::size_t>(i)];
    s.objects.push_back(std::move(o));
  }
  const double extent = ring_radius + 0.7;
  s.room_min = Vec3(-extent, -extent, 0.0);
  s.room_max = Vec3(extent, extent, 1.0);
  s.look_at = Vec3(0, 0, 0.1);
  s.orbit = {ring_radius + 1.5, 1.7, 0.25, 3, 0.0};
  return s;
}

/// Result of casting one ray into the scene.
struct Hit {
  double depth = 0.0;  // camera-z distance, 0 = miss
  int object = -1;     // object index, -1 floor or miss
  bool floor = false;
};

inline Hit cast_ray(const SynthScene& scene, const Pose& pose, const Vec3& cam_dir) {
  // cam_dir has z = 1 so the ray parameter equals camera-space depth.
  const Vec3 origin = pose.origin();
  const Vec3 dir = pose.cam_to_world().topLeftCorner<3, 3>() * cam_dir;
  Hit best;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (auto t = scene.objects[i].intersect(origin, dir); t && *t < best_t) {
      best_t = *t;
      best.object = static_cast<int>(i);
      best.floor = false;
    }
  }
  if (scene.has_floor && std::abs(dir.z()) > 1e-12) {
    const double t = (scene.room_min.z() - origin.z()) / dir.z();
    const Vec3 p = origin + t * dir;
    if (t > 1e-9 && t < best_t && p.x() >= scene.room_min.x() && p.x() <= scene.room_max.x() &&
        p.y() >= scene.room_min.y() && p.y() <= scene.room_max.y()) {
      best_t = t;
      best.object = -1;
      best.floor = true;
    }
  }
  if (std::isfinite(best_t)) best.depth = best_t;
  return best;
}

inline Pose orbit_pose(const SynthScene& scene, int view, int n_views) {
  const auto& o = scene.orbit;
  const double ang = o.phase + 2.0 * std::numbers::pi * view / n_views;
  const double h = o.height + o.height_swing * std::sin(o.swing_cycles * ang);
  const Vec3 eye = scene.look_at + Vec3(o.radius * std::cos(ang), o.radius * std::sin(ang), h);
  return Pose::look_at(eye, scene.look_at, Vec3::UnitZ());
}

struct FrameSet {
  std::vector<Frame> frames;
  std::vector<io::FrameRecord> records;
  std::vector<std::string> class_names;
};

inline const std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {120, 120, 120}, {230, 25, 75}, {60, 180, 75}, {255, 225, 25},
    {0, 130, 200}, {245, 130, 48}, {145, 30, 180}, {70, 240, 240},
}};

/// Renders `n_views` frames on the scene's orbit: exact analytic depth, one-hot
/// semantics of the front-most surface, and a coarse map whose patches carry
/// the signature of the surface seen at the patch center plus Gaussian noise.
inline FrameSet render_frames(const SynthScene& scene, int n_views, std::mt19937_64& rng) {
  scene.validate();
  require(n_views >= 1, "need at least one view");
  const auto& cam = scene.camera;
  const Intrinsics K = cam.intrinsics();
  const int C = scene.num_classes();
  const int D = scene.feature_dim;
  const int rows = CoarseFeatureMap::lattice_count(cam.height, cam.patch_size, cam.stride);
  const int cols = CoarseFeatureMap::lattice_count(cam.width, cam.patch_size, cam.stride);
  std::normal_distribution<double> noise(0.0, 1.0);

  auto dir_for = [&](double u, double v) { return Vec3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0); };
  auto signature_of = [&](const Hit& h) -> const std::vector<float>& {
    return h.object >= 0 ? scene.objects[static_cast<std::size_t>(h.object)].signature : scene.background_signature;
  };

  FrameSet out;
  out.class_names = scene.class_names;
  for (int view = 0; view < n_views; ++view) {
    Frame f;
    f.width = cam.width;
    f.height = cam.height;
    f.intrinsics = K;
    f.pose = orbit_pose(scene, view, n_views);
    f.depth.assign(static_cast<std::size_t>(cam.width) * cam.height, 0.0f);
    f.semantics = SemanticMap{cam.width, cam.height, C,
                              std::vector<float>(static_cast<std::size_t>(cam.width) * cam.height * C, 0.0f)};
    io::Rgb8Image rgb{cam.width, cam.height, std::vector<std::uint8_t>(static_cast<std::size_t>(cam.width) * cam.height * 3, 0)};
    for (int v = 0; v < cam.height; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        const Hit h = cast_ray(scene, f.pose, dir_for(u, v));
        if (h.depth <= 0.0) continue;
        const std::size_t px = static_cast<std::size_t>(v) * cam.width + u;
        f.depth[px] = static_cast<float>(h.depth);
        const int cls = h.floor ? scene.floor_class : scene.objects[static_cast<std::size_t>(h.object)].class_id;
        f.semantics.probs[px * C + static_cast<std::size_t>(cls)] = 1.0f;
        const auto& color = kPalette[static_cast<std::size_t>(cls) % kPalette.size()];
        std::copy(color.begin(), color.end(), rgb.pixels.begin() + static_cast<std::ptrdiff_t>(px * 3));
      }
    }
    f.rgb = std::move(rgb);
    std::vector<float> patches(static_cast<std::size_t>(rows) * cols * D);
    for (int r = 0; r < rows; ++r) {
      for (int s = 0; s < cols; ++s) {
        const double cu = s * cam.stride + (cam.patch_size - 1) * 0.5;
        const double cv = r * cam.stride + (cam.patch_size - 1) * 0.5;
        const auto& sig = signature_of(cast_ray(scene, f.pose, dir_for(cu, cv)));
        float* dst = patches.data() + (static_cast<std::size_t>(r) * cols + s) * D;
        for (int k = 0; k < D; ++k)
          dst[k] = static_cast<float>(sig[static_cast<std::size_t>(k)] + scene.noise_sigma * noise(rng));
      }
    }
    f.coarse = build_coarse_map(std::move(patches), rows, cols, D, cam.patch_size, cam.stride, cam.width, cam.height);
    out.records.push_back({view, K, f.pose});
    out.frames.push_back(std::move(f));
  }
  return out;
}

/// Text embeddings matching the scene: each object name maps to its signature.
inline io::KeyedVectors scene_embeddings(const SynthScene& scene) {
  io::KeyedVectors out;
  for (const auto& o : scene.objects) out[o.name] = o.signature;
  return out;
}

inline void write_frameset(const std::filesystem::path& dir, const FrameSet& fs) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < fs.frames.size(); ++i) io::write_frame(dir, fs.records[i].frame_id, fs.frames[i]);
  io::write_poses(dir, fs.records);
  io::write_text_atomic(dir / "classes.json", nlohmann::json(fs.class_names).dump());
}

struct GroundTruth {
  std::vector<std::string> object_names;
  std::vector<int> present;            // object indices rendered in this scan
  std::vector<std::string> unchanged;  // expected unchanged labels (scan B)
  std::vector<std::string> missing;    // expected missing labels (scan B)
};

inline nlohmann::json ground_truth_json(const SynthScene& scene, const GroundTruth& gt) {
  nlohmann::json objs = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    objs.push_back({{"index", i},
                    {"name", o.name},
                    {"class_id", o.class_id},
                    {"class_name", scene.class_names[static_cast<std::size_t>(o.class_id)]},
                    {"shape", o.shape == Shape::kSphere ? "sphere" : "box"},
                    {"center", {o.center.x(), o.center.y(), o.center.z()}},
                    {"half_extents", {o.half_extents.x(), o.half_extents.y(), o.half_extents.z()}},
                    {"present", std::find(gt.present.begin(), gt.present.end(), static_cast<int>(i)) != gt.present.end()}});
  }
  return {{"objects", objs}, {"noise_sigma", scene.noise_sigma}, {"unchanged", gt.unchanged}, {"missing", gt.missing}};
}

struct TwoScan {
  SynthScene scene_a;
  SynthScene scene_b;
  FrameSet a;
  FrameSet b;
  GroundTruth truth;
};

/// Scan A of the full scene and a re-scan B with fresh noise, a shifted orbit,
/// and optionally one object removed.
inline TwoScan two_scan_fixture(const SynthScene& scene, std::optional<int> remove, int n_views, std::mt19937_64& rng) {
  scene.validate();
  if (remove && (*remove < 0 || *remove >= static_cast<int>(scene.objects.size())))
    fail(ErrorKind::kInvalidArgument, "remove index out of range");
  TwoScan out;
  out.scene_a = scene;
  out.scene_b = scene;
  out.scene_b.orbit.phase += std::numbers::pi / n_views;
  if (remove) out.scene_b.objects.erase(out.scene_b.objects.begin() + *remove);
  out.a = render_frames(out.scene_a, n_views, rng);
  out.b = render_frames(out.scene_b, n_views, rng);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    out.truth.object_names.push_back(scene.objects[i].name);
    if (remove && static_cast<int>(i) == *remove) {
      out.truth.missing.push_back(scene.objects[i].name);
    } else {
      out.truth.unchanged.push_back(scene.objects[i].name);
      out.truth.present.push_back(static_cast<int>(i));
    }
  }
  return out;
}

/// Connected components of equal-label voxels by union-find over all
/// 6-adjacent same-label pairs. Each component is sorted; components are
/// sorted by first voxel.
inline std::vector<std::vector<std::size_t>> oracle_components(const LabelVolume& labels) {
  const auto [nx, ny, nz] = labels.dims;
  std::vector<std::size_t> parent(labels.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  auto at = [&](int x, int y, int z) { return (static_cast<std::size_t>(z) * ny + y) * nx + x; };
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const auto i = at(x, y, z);
        if (labels.labels[i] == kUnlabeled) continue;
        if (x + 1 < nx && labels.labels[at(x + 1, y, z)] == labels.labels[i]) unite(i, at(x + 1, y, z));
        if (y + 1 < ny && labels.labels[at(x, y + 1, z)] == labels.labels[i]) unite(i, at(x, y + 1, z));
        if (z + 1 < nz && labels.labels[at(x, y, z + 1)] == labels.labels[i]) unite(i, at(x, y, z + 1));
      }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels.labels[i] != kUnlabeled) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

}  // namespace vlfuse::synth
