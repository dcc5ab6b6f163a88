#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "vlfuse/vlfuse.hpp"

namespace vlfuse {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using test::TempDir;

// ---------------------------------------------------------------- ray oracle

// Geometric (not quadratic-formula) sphere intersection.
std::optional<double> ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const double len = d.norm();
  const Vec3 u = d / len;
  const double tc = (c - o).dot(u);
  const double h2 = (c - o).squaredNorm() - tc * tc;
  if (h2 > r * r) return std::nullopt;
  const double half = std::sqrt(r * r - h2);
  for (double s : {tc - half, tc + half})
    if (s > 1e-9) return s / len;
  return std::nullopt;
}

// Nearest face hit of an axis-aligned box, checking each of the six planes.
std::optional<double> ray_box(const Vec3& o, const Vec3& d, const Vec3& c, const Vec3& h) {
  std::optional<double> best;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) continue;
    for (double sgn : {-1.0, 1.0}) {
      const double t = (c[a] + sgn * h[a] - o[a]) / d[a];
      if (t <= 1e-9) continue;
      const Vec3 p = o + t * d;
      bool inside = true;
      for (int b = 0; b < 3; ++b)
        if (b != a && std::abs(p[b] - c[b]) > h[b] + 1e-12) inside = false;
      if (inside && (!best || t < *best)) best = t;
    }
  }
  return best;
}

struct OracleHit {
  double t = 0.0;
  int object = -2;  // -1 floor, -2 miss
};

OracleHit oracle_cast(const synth::SynthScene& s, const Pose& pose, double u, double v) {
  const auto K = s.camera.intrinsics();
  const Vec3 dir = pose.cam_to_world().topLeftCorner<3, 3>() * Vec3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
  const Vec3 o = pose.origin();
  OracleHit best;
  best.t = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& ob = s.objects[i];
    const auto t = ob.shape == synth::Shape::kSphere ? ray_sphere(o, dir, ob.center, ob.radius())
                                                     : ray_box(o, dir, ob.center, ob.half_extents);
    if (t && *t < best.t) best = {*t, static_cast<int>(i)};
  }
  if (s.has_floor && dir.z() != 0.0) {
    const double t = (s.room_min.z() - o.z()) / dir.z();
    const Vec3 p = o + t * dir;
    if (t > 1e-9 && t < best.t && p.x() >= s.room_min.x() && p.x() <= s.room_max.x() && p.y() >= s.room_min.y() &&
        p.y() <= s.room_max.y())
      best = {t, -1};
  }
  if (best.object == -2) best.t = 0.0;
  return best;
}

// ---------------------------------------------------------------- synthkit

TEST(Synth, OrthogonalSignatures) {
  std::mt19937_64 rng(4);
  const auto sigs = synth::orthogonal_signatures(9, 16, rng);
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    const auto a = oracle::widen(sigs[i]);
    EXPECT_NEAR(std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0)), 1.0, 1e-6);
    for (std::size_t j = 0; j < i; ++j) EXPECT_NEAR(oracle::cosine(a, oracle::widen(sigs[j])), 0.0, 1e-6);
  }
}

TEST(Synth, DepthMatchesAnalyticIntersection) {
  for (const auto& scene : {synth::sphere_scene(), synth::ring_scene(6, 8, 0.0, 11)}) {
    std::mt19937_64 rng(1);
    const auto fs = synth::render_frames(scene, 6, rng);
    std::size_t hits = 0;
    for (const auto& f : fs.frames) {
      for (int v = 0; v < f.height; ++v)
        for (int u = 0; u < f.width; ++u) {
          const auto h = oracle_cast(scene, f.pose, u, v);
          const float d = f.depth[static_cast<std::size_t>(v) * f.width + u];
          // float storage: at most half an ulp of a few-meter depth
          ASSERT_NEAR(d, h.t, 1e-6) << "pixel " << u << "," << v;
          if (h.t > 0) ++hits;
          if (h.object >= 0) {
            const int cls = scene.objects[static_cast<std::size_t>(h.object)].class_id;
            ASSERT_EQ(f.semantics.probs[(static_cast<std::size_t>(v) * f.width + u) * scene.num_classes() + cls], 1.0f);
          }
        }
    }
    EXPECT_GT(hits, 0u);
  }
}

TEST(Synth, NoiselessPatchesEqualSignatures) {
  auto scene = synth::ring_scene(5, 12, 0.0, 8);
  std::mt19937_64 rng(2);
  const auto fs = synth::render_frames(scene, 8, rng);
  int on_object = 0;
  for (const auto& f : fs.frames) {
    const auto& m = f.coarse;
    for (int r = 0; r < m.rows(); ++r)
      for (int s = 0; s < m.cols(); ++s) {
        const auto h = oracle_cast(scene, f.pose, m.center_x(s), m.center_y(r));
        const auto p = m.patch(r, s);
        const auto& expect =
            h.object >= 0 ? scene.objects[static_cast<std::size_t>(h.object)].signature : scene.background_signature;
        ASSERT_EQ(std::vector<float>(p.begin(), p.end()), expect);
        on_object += h.object >= 0;
      }
  }
  EXPECT_GT(on_object, 50);
}

TEST(Synth, NoisyPatchesDeviate) {
  auto scene = synth::ring_scene(3, 12, 0.05, 8);
  std::mt19937_64 rng(2);
  const auto fs = synth::render_frames(scene, 2, rng);
  double sq = 0;
  std::size_t n = 0;
  const auto& m = fs.frames[0].coarse;
  for (int r = 0; r < m.rows(); ++r)
    for (int s = 0; s < m.cols(); ++s) {
      const auto h = oracle_cast(scene, fs.frames[0].pose, m.center_x(s), m.center_y(r));
      const auto& expect = h.object >= 0 ? scene.objects[static_cast<std::size_t>(h.object)].signature : scene.background_signature;
      const auto p = m.patch(r, s);
      for (std::size_t k = 0; k < p.size(); ++k, ++n) sq += (p[k] - expect[k]) * (p[k] - expect[k]);
    }
  // empirical noise std within 20% of sigma
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 0.05, 0.01);
}

TEST(Synth, ViewCountBecomesFrameFiles) {
  TempDir dir;
  auto scene = synth::sphere_scene();
  std::mt19937_64 rng(5);
  synth::write_frameset(dir.path(), synth::render_frames(scene, 213, rng));
  EXPECT_EQ(io::read_poses(dir.path()).size(), 213u);
  std::size_t depth_files = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "frames"))
    if (e.path().filename().string().find(".depth.png") != std::string::npos) ++depth_files;
  EXPECT_EQ(depth_files, 213u);
}

// True when every view that could fuse a feature into `p` samples the coarse
// map only between patch centers that all see `object`. Conservative: a one
// pixel neighborhood is used for both the depth band and the lattice cell.
bool clean_observations(const synth::SynthScene& scene, const synth::FrameSet& fs, const Vec3& p, double trunc, int object) {
  for (const auto& f : fs.frames) {
    const Mat4& w2c = f.pose.world_to_cam();
    const Vec3 cam = w2c.topLeftCorner<3, 3>() * p + w2c.topRightCorner<3, 1>();
    if (cam.z() <= 0) continue;
    const double u = f.intrinsics.fx * cam.x() / cam.z() + f.intrinsics.cx;
    const double v = f.intrinsics.fy * cam.y() / cam.z() + f.intrinsics.cy;
    bool in_band = false;
    for (int dv = -1; dv <= 1; ++dv)
      for (int du = -1; du <= 1; ++du) {
        const long pu = std::lround(u) + du, pv = std::lround(v) + dv;
        if (pu < 0 || pv < 0 || pu >= f.width || pv >= f.height) continue;
        const double depth = f.depth[static_cast<std::size_t>(pv) * f.width + static_cast<std::size_t>(pu)];
        if (depth > 0 && std::abs(depth - cam.z()) <= trunc * 1.001) in_band = true;
      }
    if (!in_band) continue;
    const auto& m = f.coarse;
    auto lattice = [&](double x, int stride, int count) {
      const double g = (x - (m.patch_size() - 1) * 0.5) / stride;
      return std::pair<int, int>{std::clamp(static_cast<int>(std::floor(g - 1.0 / stride)), 0, count - 1),
                                 std::clamp(static_cast<int>(std::ceil(g + 1.0 / stride)), 0, count - 1)};
    };
    const auto [s0, s1] = lattice(u, m.stride(), m.cols());
    const auto [r0, r1] = lattice(v, m.stride(), m.rows());
    for (int r = r0; r <= r1; ++r)
      for (int s = s0; s <= s1; ++s)
        if (oracle_cast(scene, f.pose, m.center_x(s), m.center_y(r)).object != object) return false;
  }
  return true;
}

// Bilinear sampling blends object and background patches near silhouettes,
// so the check covers voxels whose every observation is unambiguous.
TEST(Synth, FusedSignaturesRecovered) {
  auto scene = synth::sphere_scene(0.5, 8, 7);
  std::mt19937_64 rng(6);
  const auto fs = synth::render_frames(scene, 40, rng);
  const auto art = fuse_frames(fs.frames, fs.class_names);
  ASSERT_EQ(art.inventory.segments.size(), 1u);
  const auto& g = art.volume.config();
  const auto& seg = art.inventory.segments[0];
  const auto sig = oracle::widen(scene.objects[0].signature);
  std::size_t clean = 0;
  for (std::size_t k = 0; k < seg.voxels.size(); ++k) {
    if (!clean_observations(scene, fs, g.voxel_center(g.unravel(seg.voxels[k])), g.truncation, 0)) continue;
    ++clean;
    EXPECT_GE(oracle::cosine(oracle::widen(seg.voxel_feature(k, 8)), sig), 0.999) << "voxel " << seg.voxels[k];
  }
  EXPECT_GE(clean * 10, seg.voxels.size()) << clean << " clean of " << seg.voxels.size();
}

TEST(Synth, FusedRingObjectsClosestToOwnSignature) {
  auto scene = synth::ring_scene(4, 8, 0.0, 9, false);
  std::mt19937_64 rng(6);
  const auto fs = synth::render_frames(scene, 30, rng);
  const auto art = fuse_frames(fs.frames, fs.class_names);
  ASSERT_EQ(art.inventory.segments.size(), 4u);
  for (const auto& seg : art.inventory.segments) {
    std::vector<double> mean(8, 0.0);
    for (std::size_t k = 0; k < seg.voxels.size(); ++k) {
      const auto f = seg.voxel_feature(k, 8);
      for (std::size_t c = 0; c < 8; ++c) mean[c] += f[c];
    }
    std::size_t nearest_sig = 0, nearest_obj = 0;
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
      if (oracle::cosine(mean, oracle::widen(scene.objects[o].signature)) >
          oracle::cosine(mean, oracle::widen(scene.objects[nearest_sig].signature)))
        nearest_sig = o;
      if ((seg.centroid - scene.objects[o].center).norm() < (seg.centroid - scene.objects[nearest_obj].center).norm())
        nearest_obj = o;
    }
    EXPECT_EQ(nearest_sig, nearest_obj) << seg.auto_name;
    EXPECT_GT(oracle::cosine(mean, oracle::widen(scene.objects[nearest_obj].signature)),
              oracle::cosine(mean, oracle::widen(scene.background_signature)));
  }
}

TEST(Synth, TwoScanGroundTruth) {
  auto scene = synth::ring_scene(4, 8, 0.05, 2);
  std::mt19937_64 rng(7);
  const auto none = synth::two_scan_fixture(scene, std::nullopt, 3, rng);
  EXPECT_TRUE(none.truth.missing.empty());
  EXPECT_EQ(none.truth.unchanged.size(), 4u);
  EXPECT_EQ(none.scene_b.objects.size(), 4u);

  const auto two = synth::two_scan_fixture(scene, 2, 3, rng);
  EXPECT_EQ(two.truth.missing, std::vector<std::string>{"object:2"});
  EXPECT_EQ(two.truth.unchanged, (std::vector<std::string>{"object:0", "object:1", "object:3"}));
  EXPECT_EQ(two.scene_b.objects.size(), 3u);
  for (const auto& o : two.scene_b.objects) EXPECT_NE(o.name, "object:2");
  EXPECT_EQ(two.a.frames.size(), 3u);
  EXPECT_EQ(two.b.frames.size(), 3u);
  // rescan views differ in pose
  EXPECT_GT((two.a.frames[0].pose.origin() - two.b.frames[0].pose.origin()).norm(), 0.1);
}

TEST(Synth, TwoScanRemoveOutOfRange) {
  auto scene = synth::ring_scene(4, 8, 0.05, 2);
  std::mt19937_64 rng(7);
  EXPECT_THROW(synth::two_scan_fixture(scene, 4, 2, rng), Error);
  EXPECT_THROW(synth::two_scan_fixture(scene, -1, 2, rng), Error);
}

TEST(Synth, EmptySceneRejected) {
  auto scene = synth::ring_scene(1, 8, 0.0, 2);
  scene.objects.clear();
  std::mt19937_64 rng(1);
  EXPECT_THROW(synth::render_frames(scene, 1, rng), Error);
}

TEST(Synth, OracleComponentsTrivialCases) {
  LabelVolume empty;
  empty.dims = {4, 4, 4};
  empty.labels.assign(64, kUnlabeled);
  EXPECT_TRUE(synth::oracle_components(empty).empty());
  LabelVolume checker = empty;
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) checker.labels[static_cast<std::size_t>((z * 4 + y) * 4 + x)] = (x + y + z) % 2;
  const auto comps = synth::oracle_components(checker);
  EXPECT_EQ(comps.size(), 64u);
  for (const auto& c : comps) EXPECT_EQ(c.size(), 1u);
}

// ---------------------------------------------------------------- CLI

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run cli(const fs::path& cwd, const std::vector<std::string>& args, const std::string& env = "VLFUSE_FIXED_TIME=1000") {
  std::string cmd = "cd " + quote(cwd.string()) + " && env -u VLFUSE_STORE " + env + " " + quote(VLFUSE_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >.out 2>.err";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_text(cwd / ".out");
  r.err = io::read_text(cwd / ".err");
  return r;
}

std::map<std::string, std::vector<char>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  return out;
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir;
  EXPECT_EQ(cli(dir.path(), {}).code, 1);
  EXPECT_EQ(cli(dir.path(), {"teleport"}).code, 1);
  EXPECT_EQ(cli(dir.path(), {"query", "--version", "1"}).code, 1);
  EXPECT_EQ(cli(dir.path(), {"fuse", "--frames", "x", "--voxel", "-1"}).code, 1);
  EXPECT_EQ(cli(dir.path(), {"--help"}).code, 0);
}

TEST(Cli, UserErrorsExitOneWithMessage) {
  TempDir dir;
  auto r = cli(dir.path(), {"--store", "st", "fuse", "--frames", "missing/dir"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("not_found"), std::string::npos) << r.err;
  r = cli(dir.path(), {"--store", "st", "query", "--version", "3", "--text", "cup"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  r = cli(dir.path(), {"--store", "st", "synth", "--out", "a", "--remove", "2"});
  EXPECT_EQ(r.code, 1);
  r = cli(dir.path(), {"--store", "st", "synth", "--out", "a", "--rescan", "b", "--objects", "3", "--remove", "3", "--views", "2"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("out of range"), std::string::npos) << r.err;
}

TEST(Cli, CorruptStoreExitsTwo) {
  TempDir dir;
  fs::create_directories(dir / "st");
  io::write_text_atomic(dir / "st" / "store.json", "{{{");
  const auto r = cli(dir.path(), {"--store", "st", "diff", "--prev", "1", "--curr", "2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("corrupt"), std::string::npos) << r.err;
}

class CliPipeline : public ::testing::Test {
 protected:
  // synth (3 objects on a floor, object 1 removed in the rescan) -> fuse both
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    const auto& d = dir_->path();
    ASSERT_EQ(cli(d, {"--seed", "4", "synth", "--objects", "3", "--views", "40", "--out", "scans/office/day1", "--rescan",
                      "scans/office/day2", "--remove", "1"})
                  .code,
              0);
    ASSERT_EQ(cli(d, {"--store", "st", "fuse", "--frames", "scans/office/day1", "--voxel", "0.04"}).code, 0);
    ASSERT_EQ(cli(d, {"--store", "st", "fuse", "--frames", "scans/office/day2"}).code, 0);
  }
  static void TearDownTestSuite() { delete dir_; }
  static TempDir* dir_;
};
TempDir* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, SynthWritesGroundTruth) {
  const auto gt = json::parse(io::read_text(dir_->path() / "scans/office/day2/ground_truth.json"));
  EXPECT_EQ(gt["missing"], json::array({"object:1"}));
  EXPECT_EQ(gt["objects"].size(), 3u);
  EXPECT_FALSE(gt["objects"][1]["present"].get<bool>());
  EXPECT_TRUE(fs::exists(dir_->path() / "scans/office/day1/embeddings.vlk"));
  EXPECT_EQ(io::read_poses(dir_->path() / "scans/office/day1").size(), 40u);
}

TEST_F(CliPipeline, FuseCommittedVersionsOfOffice) {
  const auto r = cli(dir_->path(), {"--store", "st", "--json", "query", "--version", "1", "--text", "object:0"});
  ASSERT_EQ(r.code, 0) << r.err;
  SceneStore store(dir_->path() / "st");
  const auto versions = store.list_versions("office");
  ASSERT_EQ(versions.size(), 2u);
  EXPECT_EQ(versions[0].version_id, 1);
  EXPECT_TRUE(versions[0].has_volume);
  // floor plus three objects, then floor plus two
  EXPECT_EQ(store.load_inventory(1).segments.size(), 4u);
  EXPECT_EQ(store.load_inventory(2).segments.size(), 3u);
}

TEST_F(CliPipeline, QueryPrintsRankedSegmentsAndHeatMesh) {
  const auto d = dir_->path();
  auto r = cli(d, {"--store", "st", "query", "--version", "1", "--text", "things that might be dangerous to babies", "--heat-out",
                   "heat.vmesh"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rank"), std::string::npos);
  EXPECT_NE(r.out.find("floor:1"), std::string::npos) << r.out;
  const auto mesh = import_mesh(d / "heat.vmesh");
  ASSERT_TRUE(mesh.vertex_heat);
  SceneStore store(d / "st");
  EXPECT_EQ(mesh.vertex_count(), store.load_mesh(1).vertex_count());

  r = cli(d, {"--store", "st", "--json", "query", "--version", "1", "--text", "object:2", "--top", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["ranked"].size(), 4u);
  const auto inv = store.load_inventory(1);
  const auto gt = json::parse(io::read_text(d / "scans/office/day1/ground_truth.json"));
  const auto c = gt["objects"][2]["center"].get<std::vector<double>>();
  const auto* top = inv.find(j["ranked"][0]["segment_id"].get<int>());
  ASSERT_NE(top, nullptr);
  EXPECT_LT((top->centroid - Vec3(c[0], c[1], c[2])).norm(), 0.15);
}

TEST_F(CliPipeline, StoreFromEnvironment) {
  const auto r = cli(dir_->path(), {"--json", "query", "--version", "2", "--text", "object:0"}, "VLFUSE_STORE=st VLFUSE_FIXED_TIME=1000");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["version_id"], 2);
}

// Label, train and diff mutate the store, so they run on a copy.
TEST_F(CliPipeline, LabelTrainDiffReportsRemovedObject) {
  TempDir work;
  fs::copy(dir_->path() / "st", work / "st", fs::copy_options::recursive);
  fs::copy(dir_->path() / "scans", work / "scans", fs::copy_options::recursive);
  const auto& d = work.path();

  EXPECT_EQ(cli(d, {"--store", "st", "label", "--version", "1", "--rename", "2", "--remember", "3"}).code, 1);
  EXPECT_EQ(cli(d, {"--store", "st", "label", "--version", "1", "--rename", "2"}).code, 1);  // empty name
  EXPECT_EQ(cli(d, {"--store", "st", "label", "--version", "1", "--remember", "99"}).code, 1);
  EXPECT_EQ(cli(d, {"--store", "st", "label", "--version", "1", "--merge", "2,x"}).code, 1);

  SceneStore before(d / "st");
  const auto inv = before.load_inventory(1);
  for (const auto& s : inv.segments) {
    if (s.class_id == 0) continue;
    const auto r = cli(d, {"--store", "st", "label", "--version", "1", "--remember", std::to_string(s.id)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  auto r = cli(d, {"--store", "st", "label", "--version", "1", "--rename", "2", "--name", "Joe's thermos"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Joe's thermos"), std::string::npos);

  EXPECT_EQ(cli(d, {"--store", "st", "diff", "--prev", "1", "--curr", "2"}).code, 1);  // no model yet

  r = cli(d, {"--store", "st", "--seed", "4", "--json", "train", "--version", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(r.out);
  EXPECT_GE(rep["best_accuracy"].get<double>(), 0.95);
  EXPECT_EQ(rep["stopped_reason"], "cooldown");
  EXPECT_EQ(rep["epochs_run"].get<int>() - rep["best_epoch"].get<int>(), 10);

  r = cli(d, {"--store", "st", "--seed", "4", "diff", "--prev", "1", "--curr", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("missing "), std::string::npos) << r.out;
  const auto j = json::parse(r.out.substr(r.out.rfind('{', r.out.find("\"curr_version\""))));
  ASSERT_EQ(j["missing"].size(), 1u);
  EXPECT_EQ(j["unchanged"].size(), 2u);
  const auto gt = json::parse(io::read_text(d / "scans/office/day2/ground_truth.json"));
  const auto c = gt["objects"][1]["center"].get<std::vector<double>>();
  const auto pc = j["missing"][0]["prev_centroid"].get<std::vector<double>>();
  EXPECT_LT((Vec3(pc[0], pc[1], pc[2]) - Vec3(c[0], c[1], c[2])).norm(), 0.15) << r.out;
}

TEST(CliDeterminism, SeededPipelineIsByteIdentical) {
  TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    const auto& d = dir->path();
    ASSERT_EQ(cli(d, {"--seed", "9", "synth", "--objects", "3", "--views", "24", "--out", "s/room/one", "--rescan", "s/room/two",
                      "--remove", "0"})
                  .code,
              0);
    ASSERT_EQ(cli(d, {"--store", "st", "--seed", "9", "fuse", "--frames", "s/room/one"}).code, 0);
    ASSERT_EQ(cli(d, {"--store", "st", "--seed", "9", "fuse", "--frames", "s/room/two"}).code, 0);
    ASSERT_EQ(cli(d, {"--store", "st", "--seed", "9", "segment", "--version", "1"}).code, 0);
    for (int id : {2, 3, 4}) ASSERT_EQ(cli(d, {"--store", "st", "label", "--version", "1", "--remember", std::to_string(id)}).code, 0);
    ASSERT_EQ(cli(d, {"--store", "st", "--seed", "9", "--json", "train", "--version", "1"}).code, 0);
    const auto diff = cli(d, {"--store", "st", "--seed", "9", "--json", "diff", "--prev", "1", "--curr", "2"});
    ASSERT_EQ(diff.code, 0);
    io::write_text_atomic(d / "diff.json", diff.out);
  }
  const auto ta = tree_bytes(a.path());
  const auto tb = tree_bytes(b.path());
  ASSERT_EQ(ta.size(), tb.size());
  std::size_t compared = 0;
  for (const auto& [name, bytes] : ta) {
    if (name == ".out" || name == ".err") continue;
    ASSERT_TRUE(tb.count(name)) << name;
    EXPECT_TRUE(bytes == tb.at(name)) << name;
    ++compared;
  }
  EXPECT_GT(compared, 100u);
}

}  // namespace
}  // namespace vlfuse
