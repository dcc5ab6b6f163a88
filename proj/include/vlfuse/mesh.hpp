#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vlfuse/error.hpp"
#include "vlfuse/io/binary.hpp"

namespace vlfuse {

inline constexpr std::int32_t kUnlabeled = -1;

struct Mesh {
  std::vector<Eigen::Vector3f> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  int feature_dim = 0;
  std::vector<float> vertex_feats;          // vertices.size() * feature_dim when populated
  std::vector<std::int32_t> vertex_class;   // kUnlabeled where semantics are untrusted
  std::optional<std::vector<float>> vertex_heat;

  std::size_t vertex_count() const { return vertices.size(); }
  bool has_features() const { return feature_dim > 0 && !vertex_feats.empty(); }

  std::span<const float> feature(std::size_t v) const {
    return {vertex_feats.data() + v * static_cast<std::size_t>(feature_dim),
            static_cast<std::size_t>(feature_dim)};
  }

  void validate() const {
    const auto n = vertices.size();
    for (const auto& t : triangles)
      for (auto i : t) require(i < n, "triangle index out of range");
    for (const auto& v : vertices) require(v.allFinite(), "non-finite vertex coordinate");
    if (!vertex_feats.empty())
      require(vertex_feats.size() == n * static_cast<std::size_t>(feature_dim),
              "vertex feature count differs from vertex count");
    if (!vertex_class.empty()) require(vertex_class.size() == n, "vertex class count differs from vertex count");
    if (vertex_heat) require(vertex_heat->size() == n, "vertex heat count differs from vertex count");
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

// ".vmesh": "VMSH", u32 vertex count, u32 triangle count, u32 D, u32 flags
// (bit 0 heat block, bit 1 class block), positions f32x3, triangles u32x3,
// features f32xD per vertex, classes i32 (-1 = unlabeled), heat f32. Little-endian.

namespace mesh_flags {
inline constexpr std::uint32_t kHeat = 1u << 0;
inline constexpr std::uint32_t kClasses = 1u << 1;
}  // namespace mesh_flags

inline std::vector<char> encode_mesh(const Mesh& mesh) {
  mesh.validate();
  const bool has_feats = !mesh.vertex_feats.empty();
  io::ByteWriter w;
  w.magic("VMSH");
  w.u32(static_cast<std::uint32_t>(mesh.vertices.size()));
  w.u32(static_cast<std::uint32_t>(mesh.triangles.size()));
  w.u32(has_feats ? static_cast<std::uint32_t>(mesh.feature_dim) : 0u);
  std::uint32_t flags = 0;
  if (mesh.vertex_heat) flags |= mesh_flags::kHeat;
  if (!mesh.vertex_class.empty()) flags |= mesh_flags::kClasses;
  w.u32(flags);
  for (const auto& v : mesh.vertices) {
    w.f32(v.x());
    w.f32(v.y());
    w.f32(v.z());
  }
  for (const auto& t : mesh.triangles)
    for (auto i : t) w.u32(i);
  if (has_feats) w.f32s(mesh.vertex_feats);
  for (auto c : mesh.vertex_class) w.i32(c);
  if (mesh.vertex_heat) w.f32s(*mesh.vertex_heat);
  return w.take();
}

inline Mesh decode_mesh(std::span<const char> bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  r.expect_magic("VMSH");
  const auto nv = r.u32();
  const auto nt = r.u32();
  const auto dim = r.u32();
  const auto flags = r.u32();
  Mesh m;
  m.feature_dim = static_cast<int>(dim);
  std::size_t expect = std::size_t{nv} * 12 + std::size_t{nt} * 12 + std::size_t{nv} * dim * 4;
  if (flags & mesh_flags::kClasses) expect += std::size_t{nv} * 4;
  if (flags & mesh_flags::kHeat) expect += std::size_t{nv} * 4;
  if (r.remaining() != expect) fail(ErrorKind::kCorrupt, source + ": mesh payload size mismatch");
  m.vertices.resize(nv);
  for (auto& v : m.vertices) {
    const float x = r.f32(), y = r.f32(), z = r.f32();
    v = {x, y, z};
  }
  m.triangles.resize(nt);
  for (auto& t : m.triangles)
    for (auto& i : t) i = r.u32();
  if (dim > 0) {
    m.vertex_feats.resize(std::size_t{nv} * dim);
    r.f32s(m.vertex_feats);
  }
  if (flags & mesh_flags::kClasses) {
    m.vertex_class.resize(nv);
    for (auto& c : m.vertex_class) c = r.i32();
  }
  if (flags & mesh_flags::kHeat) {
    m.vertex_heat.emplace(nv);
    r.f32s(*m.vertex_heat);
  }
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kCorrupt, source + ": " + e.what());
  }
  return m;
}

inline void export_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_mesh(mesh));
}

inline Mesh import_mesh(const std::filesystem::path& path) {
  auto bytes = io::read_file(path);
  return decode_mesh(bytes, path.string());
}

}  // namespace vlfuse
