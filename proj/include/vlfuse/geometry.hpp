#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vlfuse/error.hpp"

namespace vlfuse {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecXf = Eigen::VectorXf;

/// Pinhole intrinsics in pixels.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Rigid camera-to-world transform.
class Pose {
 public:
  Pose() : cam_to_world_(Mat4::Identity()), world_to_cam_(Mat4::Identity()) {}

  explicit Pose(const Mat4& cam_to_world) : cam_to_world_(cam_to_world) {
    const Mat3 r = cam_to_world.topLeftCorner<3, 3>();
    const double err = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(err <= 1e-5, "pose rotation block is not orthonormal");
    require(cam_to_world(3, 0) == 0.0 && cam_to_world(3, 1) == 0.0 && cam_to_world(3, 2) == 0.0 &&
                cam_to_world(3, 3) == 1.0,
            "pose bottom row must be 0 0 0 1");
    world_to_cam_ = Mat4::Identity();
    world_to_cam_.topLeftCorner<3, 3>() = r.transpose();
    world_to_cam_.topRightCorner<3, 1>() = -r.transpose() * cam_to_world.topRightCorner<3, 1>();
  }

  /// Row-major 16 numbers, as stored in poses.json.
  static Pose from_row_major(const std::array<double, 16>& m) {
    Mat4 t;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) t(r, c) = m[static_cast<std::size_t>(r * 4 + c)];
    return Pose(t);
  }

  std::array<double, 16> row_major() const {
    std::array<double, 16> m{};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m[static_cast<std::size_t>(r * 4 + c)] = cam_to_world_(r, c);
    return m;
  }

  /// Camera looking from `eye` at `target`; camera z forward, x right, y down.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(world_up);
    if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
    right.normalize();
    const Vec3 down = forward.cross(right);
    Mat4 t = Mat4::Identity();
    t.block<3, 1>(0, 0) = right;
    t.block<3, 1>(0, 1) = down;
    t.block<3, 1>(0, 2) = forward;
    t.block<3, 1>(0, 3) = eye;
    return Pose(t);
  }

  const Mat4& cam_to_world() const { return cam_to_world_; }
  const Mat4& world_to_cam() const { return world_to_cam_; }

  Vec3 to_camera(const Vec3& p) const {
    return world_to_cam_.topLeftCorner<3, 3>() * p + world_to_cam_.topRightCorner<3, 1>();
  }
  Vec3 to_world(const Vec3& p) const {
    return cam_to_world_.topLeftCorner<3, 3>() * p + cam_to_world_.topRightCorner<3, 1>();
  }
  Vec3 origin() const { return cam_to_world_.topRightCorner<3, 1>(); }

 private:
  Mat4 cam_to_world_;
  Mat4 world_to_cam_;
};

/// Integer voxel coordinate.
struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3& a, const Index3& b) {
    if (auto c = a.z <=> b.z; c != 0) return c;
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
};

}  // namespace vlfuse
