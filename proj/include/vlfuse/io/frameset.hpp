#pragma once

// Frame-set directory layout:
//   frames/NNNNNN.rgb.png    8-bit RGB (optional on read)
//   frames/NNNNNN.depth.png  16-bit gray, millimeters, 0 = invalid
//   frames/NNNNNN.sem.vlf    H x W x C class distribution
//   frames/NNNNNN.feat.vlf   R x S x D patch grid + tiling footer
//   poses.json               [{frame, intrinsics:{fx,fy,cx,cy}, cam_to_world:[16]}]
//   classes.json             optional list of class display names

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlfuse/frame.hpp"
#include "vlfuse/io/png.hpp"
#include "vlfuse/io/vlf.hpp"

namespace vlfuse::io {

inline std::string frame_stem(int frame_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", frame_id);
  return buf;
}

struct FrameRecord {
  int frame_id = 0;
  Intrinsics intrinsics;
  Pose pose;
};

inline std::vector<FrameRecord> read_poses(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(dir / "poses.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, "poses.json: " + std::string(e.what()));
  }
  require(j.is_array(), "poses.json must be an array");
  std::vector<FrameRecord> out;
  try {
    for (const auto& e : j) {
      FrameRecord r;
      r.frame_id = e.at("frame").get<int>();
      const auto& k = e.at("intrinsics");
      r.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                      k.at("cy").get<double>()};
      auto m = e.at("cam_to_world").get<std::vector<double>>();
      require(m.size() == 16, "cam_to_world must have 16 numbers");
      std::array<double, 16> a{};
      std::copy(m.begin(), m.end(), a.begin());
      r.pose = Pose::from_row_major(a);
      out.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, "poses.json: " + std::string(e.what()));
  }
  return out;
}

inline std::vector<std::string> read_class_names(const std::filesystem::path& dir, int num_classes) {
  std::vector<std::string> names;
  if (std::filesystem::exists(dir / "classes.json")) {
    names = nlohmann::json::parse(read_text(dir / "classes.json")).get<std::vector<std::string>>();
    require(static_cast<int>(names.size()) == num_classes,
            "classes.json lists " + std::to_string(names.size()) + " names, semantic maps carry " +
                std::to_string(num_classes));
  } else {
    for (int c = 0; c < num_classes; ++c) names.push_back("class" + std::to_string(c));
  }
  return names;
}

inline Frame read_frame(const std::filesystem::path& dir, const FrameRecord& rec, bool load_rgb = false) {
  const auto base = dir / "frames" / frame_stem(rec.frame_id);
  auto path = [&](const char* suffix) {
    auto p = base;
    p += suffix;
    return p;
  };
  Frame f;
  f.intrinsics = rec.intrinsics;
  f.pose = rec.pose;
  const auto depth = read_gray16(path(".depth.png"));
  f.width = depth.width;
  f.height = depth.height;
  f.depth.resize(depth.pixels.size());
  for (std::size_t i = 0; i < depth.pixels.size(); ++i) f.depth[i] = depth.pixels[i] * 0.001f;

  auto sem = read_vlf(path(".sem.vlf"));
  require(static_cast<int>(sem.tensor.rows) == f.height && static_cast<int>(sem.tensor.cols) == f.width,
          "semantic map dims differ from depth image for frame " + std::to_string(rec.frame_id));
  f.semantics = SemanticMap{f.width, f.height, static_cast<int>(sem.tensor.dim), std::move(sem.tensor.values)};

  auto feat = read_vlf(path(".feat.vlf"));
  if (!feat.footer) fail(ErrorKind::kCorrupt, "feature map without tiling footer: " + path(".feat.vlf").string());
  f.coarse = build_coarse_map(std::move(feat.tensor.values), static_cast<int>(feat.tensor.rows),
                              static_cast<int>(feat.tensor.cols), static_cast<int>(feat.tensor.dim),
                              static_cast<int>(feat.footer->patch_size), static_cast<int>(feat.footer->stride),
                              static_cast<int>(feat.footer->image_w), static_cast<int>(feat.footer->image_h));
  if (load_rgb && std::filesystem::exists(path(".rgb.png"))) f.rgb = read_rgb8(path(".rgb.png"));
  return f;
}

inline void write_frame(const std::filesystem::path& dir, int frame_id, const Frame& f) {
  std::filesystem::create_directories(dir / "frames");
  const auto base = dir / "frames" / frame_stem(frame_id);
  auto path = [&](const char* suffix) {
    auto p = base;
    p += suffix;
    return p;
  };
  Gray16Image depth{f.width, f.height, std::vector<std::uint16_t>(f.depth.size())};
  for (std::size_t i = 0; i < f.depth.size(); ++i) {
    const double mm = std::round(static_cast<double>(f.depth[i]) * 1000.0);
    depth.pixels[i] = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
  }
  write_gray16(path(".depth.png"), depth);
  if (f.rgb) write_rgb8(path(".rgb.png"), *f.rgb);

  VlfTensor sem{static_cast<std::uint32_t>(f.height), static_cast<std::uint32_t>(f.width),
                static_cast<std::uint32_t>(f.semantics.num_classes), f.semantics.probs};
  write_vlf(path(".sem.vlf"), sem);

  const auto vals = f.coarse.values();
  VlfTensor feat{static_cast<std::uint32_t>(f.coarse.rows()), static_cast<std::uint32_t>(f.coarse.cols()),
                 static_cast<std::uint32_t>(f.coarse.dim()), std::vector<float>(vals.begin(), vals.end())};
  write_vlf(path(".feat.vlf"), feat,
            VlfFooter{static_cast<std::uint32_t>(f.coarse.patch_size()), static_cast<std::uint32_t>(f.coarse.stride()),
                      static_cast<std::uint32_t>(f.coarse.image_width()),
                      static_cast<std::uint32_t>(f.coarse.image_height())});
}

inline void write_poses(const std::filesystem::path& dir, const std::vector<FrameRecord>& records) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : records) {
    j.push_back({{"frame", r.frame_id},
                 {"intrinsics", {{"fx", r.intrinsics.fx}, {"fy", r.intrinsics.fy}, {"cx", r.intrinsics.cx}, {"cy", r.intrinsics.cy}}},
                 {"cam_to_world", r.pose.row_major()}});
  }
  write_text_atomic(dir / "poses.json", j.dump(2));
}

}  // namespace vlfuse::io
