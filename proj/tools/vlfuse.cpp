// vlfuse command-line front end: fuse, segment, query, label, train, diff,
// serve, synth. Exit codes: 0 success, 1 user error, 2 internal failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vlfuse/vlfuse.hpp"
#include "vlfuse/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string store;
  bool json_out = false;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

vlfuse::SceneStore open_store(const Globals& g) { return vlfuse::SceneStore(vlfuse::resolve_store_root(g.store)); }

void emit(const Globals& g, const json& j, const std::string& text) {
  if (g.json_out)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string inventory_table(const vlfuse::Inventory& inv) {
  std::ostringstream os;
  os << "  id  label                      class            voxels  remembered\n";
  for (const auto& s : inv.segments) {
    char line[256];
    std::snprintf(line, sizeof line, "%4d  %-25s  %-15s  %6zu  %s\n", s.id, s.label().c_str(),
                  inv.class_names[static_cast<std::size_t>(s.class_id)].c_str(), s.voxels.size(),
                  s.remembered ? "yes" : "no");
    os << line;
  }
  return os.str();
}

json io_summary(const vlfuse::Inventory& inv, int version) {
  auto j = vlfuse::io::inventory_summary(inv);
  j["version_id"] = version;
  return j;
}

std::vector<int> parse_ids(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      ids.push_back(std::stoi(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      vlfuse::fail(vlfuse::ErrorKind::kInvalidArgument, "invalid segment id '" + tok + "'");
    }
  }
  return ids;
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  std::string rescan;
  std::string preset = "ring";
  int objects = 8;
  int dim = 16;
  double sigma = 0.05;
  int views = 60;
  int remove = -1;
};

void write_extras(const fs::path& dir, const vlfuse::synth::SynthScene& scene, const vlfuse::synth::GroundTruth& gt) {
  vlfuse::io::write_text_atomic(dir / "ground_truth.json", vlfuse::synth::ground_truth_json(scene, gt).dump(1) + "\n");
  const auto emb = vlfuse::synth::scene_embeddings(scene);
  vlfuse::io::write_file_atomic(dir / "embeddings.vlk", vlfuse::io::encode_vlk(emb, static_cast<std::uint32_t>(scene.feature_dim)));
}

int run_synth(const Globals& g, const SynthArgs& a) {
  using namespace vlfuse::synth;
  SynthScene scene;
  if (a.preset == "sphere")
    scene = sphere_scene(0.5, a.dim, g.seed);
  else if (a.preset == "ring")
    scene = ring_scene(a.objects, a.dim, a.sigma, g.seed);
  else if (a.preset == "ring-nofloor")
    scene = ring_scene(a.objects, a.dim, a.sigma, g.seed, false);
  else
    vlfuse::fail(vlfuse::ErrorKind::kInvalidArgument, "unknown preset '" + a.preset + "'");
  if (a.preset == "sphere") scene.noise_sigma = a.sigma;
  std::mt19937_64 rng(g.seed);
  json out = {{"preset", a.preset}, {"objects", scene.objects.size()}, {"views", a.views}};
  if (a.rescan.empty()) {
    if (a.remove >= 0) vlfuse::fail(vlfuse::ErrorKind::kInvalidArgument, "--remove needs --rescan");
    const auto fs_a = render_frames(scene, a.views, rng);
    write_frameset(a.out, fs_a);
    GroundTruth gt;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      gt.object_names.push_back(scene.objects[i].name);
      gt.present.push_back(static_cast<int>(i));
    }
    write_extras(a.out, scene, gt);
    out["frames"] = a.out;
  } else {
    std::optional<int> remove;
    if (a.remove >= 0) remove = a.remove;
    const auto two = two_scan_fixture(scene, remove, a.views, rng);
    write_frameset(a.out, two.a);
    write_frameset(a.rescan, two.b);
    GroundTruth gt_a;
    gt_a.object_names = two.truth.object_names;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) gt_a.present.push_back(static_cast<int>(i));
    write_extras(a.out, two.scene_a, gt_a);
    write_extras(a.rescan, two.scene_a, two.truth);
    out["frames"] = a.out;
    out["rescan"] = a.rescan;
    out["missing"] = two.truth.missing;
  }
  emit(g, out, "wrote " + std::to_string(a.views) + " views of " + std::to_string(scene.objects.size()) + " objects to " + a.out +
                   (a.rescan.empty() ? "" : " and " + a.rescan) + "\n");
  return 0;
}

// ---- fuse / segment ----

struct FuseArgs {
  std::string frames;
  std::string scene;
  double voxel = 0.04;
  std::size_t budget_mb = 4096;
  int min_size = static_cast<int>(vlfuse::kDefaultMinSegmentSize);
  int connectivity = 6;
  bool no_volume = false;
};

vlfuse::FuseOptions fuse_options(const Globals& g, double voxel, std::size_t budget_mb, int min_size, int connectivity) {
  vlfuse::require(connectivity == 6 || connectivity == 26, "connectivity must be 6 or 26");
  vlfuse::require(min_size >= 1, "min segment size must be >= 1");
  vlfuse::FuseOptions o;
  o.voxel_size = voxel;
  o.memory_budget = budget_mb << 20;
  o.min_segment_size = static_cast<std::size_t>(min_size);
  o.connectivity = connectivity == 26 ? vlfuse::Connectivity::kFull26 : vlfuse::Connectivity::kFaces6;
  o.threads = g.threads;
  return o;
}

int run_fuse(const Globals& g, const FuseArgs& a) {
  if (!fs::is_directory(a.frames)) vlfuse::fail(vlfuse::ErrorKind::kNotFound, "frame set not found: " + a.frames);
  const auto opts = fuse_options(g, a.voxel, a.budget_mb, a.min_size, a.connectivity);
  auto art = vlfuse::fuse_frameset(a.frames, opts);
  std::string scene = a.scene;
  if (scene.empty()) {
    // Scans of one space live side by side: scans/office/day1, scans/office/day2 -> "office".
    auto p = fs::absolute(a.frames).lexically_normal();
    if (p.filename().empty()) p = p.parent_path();
    scene = p.parent_path().filename().string();
  }
  if (scene.empty() || scene == "/") scene = "scene";
  auto store = open_store(g);
  const int id = store.commit(scene, art.inventory, art.mesh, a.no_volume ? nullptr : &art.volume);
  if (fs::exists(fs::path(a.frames) / "embeddings.vlk")) {
    const auto bytes = vlfuse::io::read_file(fs::path(a.frames) / "embeddings.vlk");
    store.attach_embeddings(id, vlfuse::io::decode_vlk(bytes, a.frames + "/embeddings.vlk"));
  }
  const auto& d = art.volume.config().dims;
  json out = {{"version_id", id},
              {"scene", scene},
              {"dims", d},
              {"vertices", art.mesh.vertices.size()},
              {"triangles", art.mesh.triangles.size()},
              {"segments", art.inventory.segments.size()}};
  std::ostringstream os;
  os << "committed version " << id << " of scene '" << scene << "': grid " << d[0] << "x" << d[1] << "x" << d[2] << ", "
     << art.mesh.vertices.size() << " vertices, " << art.inventory.segments.size() << " segments\n"
     << inventory_table(art.inventory);
  emit(g, out, os.str());
  return 0;
}

int run_segment(const Globals& g, int version, int min_size, int connectivity) {
  auto store = open_store(g);
  const auto vol = store.load_volume(version);
  const auto old = store.load_inventory(version);
  const auto inv = vlfuse::segment_volume(vol, old.class_names, fuse_options(g, vol.config().voxel_size, 4096, min_size, connectivity));
  store.replace_inventory(version, inv);
  emit(g, io_summary(inv, version), "version " + std::to_string(version) + ": " + std::to_string(inv.segments.size()) + " segments\n" + inventory_table(inv));
  return 0;
}

// ---- query / label / train / diff ----

struct QueryArgs {
  int version = 0;
  std::string text;
  double temperature = vlfuse::kDefaultTemperature;
  std::vector<std::string> negatives;
  std::string embeddings;
  std::string heat_out;
  int top = 10;
};

int run_query(const Globals& g, const QueryArgs& a) {
  auto store = open_store(g);
  vlfuse::Mesh mesh = store.load_mesh(a.version);
  const auto inv = store.load_inventory(a.version);
  std::shared_ptr<const vlfuse::TextEmbedder> embedder;
  if (!a.embeddings.empty())
    embedder = std::make_shared<vlfuse::FileEmbedder>(
        vlfuse::FileEmbedder::load(a.embeddings, std::make_shared<vlfuse::HashEmbedder>(inv.feature_dim())));
  else
    embedder = vlfuse::scene_embedder(store.load_embeddings(a.version), inv.feature_dim());
  const auto result = vlfuse::run_query(mesh, inv, *embedder, a.text, a.temperature, a.negatives);
  if (!a.heat_out.empty()) {
    mesh.vertex_heat = result.display_heat;
    vlfuse::export_mesh(mesh, a.heat_out);
  }
  auto ranked = result.ranked;
  if (a.top > 0 && ranked.size() > static_cast<std::size_t>(a.top)) ranked.resize(static_cast<std::size_t>(a.top));
  json out = {{"version_id", a.version}, {"text", a.text}, {"negatives", result.negatives}, {"ranked", vlfuse::ranked_to_json(ranked)}};
  if (!a.heat_out.empty()) out["heat_mesh"] = a.heat_out;
  std::ostringstream os;
  os << "query \"" << a.text << "\" against " << result.negatives.size() << " negatives\n";
  os << "rank  id    mean_heat  vertices  label\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    char line[256];
    std::snprintf(line, sizeof line, "%4zu  %-4d  %9.4f  %8zu  %s\n", i + 1, ranked[i].segment_id, ranked[i].mean_heat,
                  ranked[i].vertex_count, ranked[i].label.c_str());
    os << line;
  }
  emit(g, out, os.str());
  return 0;
}

struct LabelArgs {
  int version = 0;
  std::string merge;
  int rename = -1;
  int remember = -1;
  std::string name;
};

int run_label(const Globals& g, const LabelArgs& a) {
  const int chosen = (!a.merge.empty()) + (a.rename >= 0) + (a.remember >= 0);
  if (chosen != 1) vlfuse::fail(vlfuse::ErrorKind::kInvalidArgument, "give exactly one of --merge, --rename, --remember");
  auto store = open_store(g);
  const auto seg = store.mutate_inventory(a.version, [&](vlfuse::Inventory& inv) {
    if (!a.merge.empty()) return vlfuse::io::segment_summary(vlfuse::apply_merge(inv, parse_ids(a.merge), a.name), inv);
    if (a.rename >= 0) return vlfuse::io::segment_summary(vlfuse::apply_rename(inv, a.rename, a.name), inv);
    return vlfuse::io::segment_summary(vlfuse::apply_remember(inv, a.remember), inv);
  });
  emit(g, {{"version_id", a.version}, {"segment", seg}},
       "segment " + std::to_string(seg["id"].get<int>()) + " is now '" + seg["label"].get<std::string>() + "' (remembered)\n");
  return 0;
}

struct TrainArgs {
  int version = 0;
  int epochs = 500;
  int cooldown = 10;
  bool fresh = false;
};

int run_train(const Globals& g, const TrainArgs& a) {
  auto store = open_store(g);
  const auto info = store.info(a.version);
  auto inv = store.load_inventory(a.version);
  std::optional<vlfuse::MultiVolume> vol;
  if (info.has_volume) vol = store.load_volume(a.version);
  std::optional<vlfuse::insitu::EdgeConvModel<float>> base;
  if (!a.fresh) {
    if (auto mv = store.latest_model_version(info.scene)) {
      auto ckpt = store.load_model(*mv);
      if (ckpt && ckpt->model.config().input_dim == inv.feature_dim()) base = std::move(ckpt->model);
    }
  }
  vlfuse::insitu::TrainConfig cfg;
  cfg.seed = g.seed;
  cfg.epoch_cap = a.epochs;
  cfg.cooldown = a.cooldown;
  auto outcome = vlfuse::insitu::train_inventory(inv, vol ? &*vol : nullptr, cfg, std::move(base));
  store.save_model(a.version, outcome.model, cfg, vlfuse::insitu::report_to_json(outcome.report, false));
  store.mutate_inventory(a.version, [&](vlfuse::Inventory& current) {
    for (auto& s : current.segments)
      s.insitu_class = s.personalized() ? outcome.model.registry().index_of(s.label()) : std::nullopt;
  });
  const auto& r = outcome.report;
  json out = vlfuse::insitu::report_to_json(r);
  out["version_id"] = a.version;
  out["classes"] = outcome.model.registry().labels();
  emit(g, out,
       "trained on " + std::to_string(outcome.model.registry().size() - 1) + " personalized labels: " + std::to_string(r.epochs_run) +
           " epochs, best accuracy " + fmt(r.best_accuracy) + " (epoch " + std::to_string(r.best_epoch) + "), stopped by " +
           vlfuse::insitu::to_string(r.stopped_reason) + " after " + fmt(r.wall_time, 2) + " s\n");
  return 0;
}

int run_diff(const Globals& g, int prev, int curr, int votes) {
  auto store = open_store(g);
  vlfuse::DiffOptions opts;
  opts.seed = g.seed;
  opts.votes = votes;
  const auto report = vlfuse::SceneService::diff_stored(store, prev, curr, opts);
  std::ostringstream os;
  os << "diff " << prev << " -> " << curr << "\n";
  os << "status     label                      prev  curr  confidence\n";
  for (const auto& u : report.unchanged) {
    char line[256];
    std::snprintf(line, sizeof line, "unchanged  %-25s  %4d  %4d  %10.3f\n", u.label.c_str(), u.prev_segment, u.curr_segment, u.confidence);
    os << line;
  }
  for (const auto& m : report.missing) {
    char line[256];
    std::snprintf(line, sizeof line, "missing    %-25s  %4d     -           -   at (%.2f, %.2f, %.2f)\n", m.label.c_str(),
                  m.prev_segment, m.prev_centroid.x(), m.prev_centroid.y(), m.prev_centroid.z());
    os << line;
  }
  os << vlfuse::diff_to_json(report).dump() << "\n";
  emit(g, vlfuse::diff_to_json(report), os.str());
  return 0;
}

int run_serve(const Globals& g, const std::string& host, int port) {
  auto store = open_store(g);
  vlfuse::ServiceOptions opts;
  opts.train.seed = g.seed;
  opts.diff.seed = g.seed;
  vlfuse::SceneService service(store, opts);
  std::cerr << "serving " << store.root().string() << " on http://" << host << ":" << port << "\n";
  service.run(host, port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlfuse: multimodal voxel fusion, open-vocabulary search and object inventory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--store", g.store, "Store root (default: $VLFUSE_STORE, else ./store)");
  app.add_flag("--json", g.json_out, "Machine-readable JSON output");
  app.add_option("--seed", g.seed, "Seed for every stochastic step");
  app.add_option("--threads", g.threads, "Integration threads (0 = hardware)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic frame set with ground truth");
  c_synth->add_option("--out", synth.out, "Output frame-set directory")->required();
  c_synth->add_option("--rescan", synth.rescan, "Also write a second scan here");
  c_synth->add_option("--preset", synth.preset, "ring | ring-nofloor | sphere")->capture_default_str();
  c_synth->add_option("--objects", synth.objects, "Object count")->capture_default_str()->check(CLI::Range(1, 64));
  c_synth->add_option("--dim", synth.dim, "Feature dimension")->capture_default_str()->check(CLI::Range(1, 4096));
  c_synth->add_option("--sigma", synth.sigma, "Patch feature noise")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_synth->add_option("--views", synth.views, "Views per scan")->capture_default_str()->check(CLI::Range(1, 100000));
  c_synth->add_option("--remove", synth.remove, "Object index deleted from the rescan");

  FuseArgs fuse;
  auto* c_fuse = app.add_subcommand("fuse", "Fuse a frame set and commit a new version");
  c_fuse->add_option("--frames", fuse.frames, "Frame-set directory")->required();
  c_fuse->add_option("--scene", fuse.scene, "Scene name (default: name of the directory holding the frame set)");
  c_fuse->add_option("--voxel", fuse.voxel, "Voxel size in meters (2/4/8/16 cm are typical)")->capture_default_str()->check(CLI::PositiveNumber);
  c_fuse->add_option("--budget-mb", fuse.budget_mb, "Volume memory budget")->capture_default_str();
  c_fuse->add_option("--min-size", fuse.min_size, "Minimum segment voxels")->capture_default_str();
  c_fuse->add_option("--connectivity", fuse.connectivity, "6 or 26")->capture_default_str();
  c_fuse->add_flag("--no-volume", fuse.no_volume, "Do not store the voxel volume");

  int seg_version = 0, seg_min = static_cast<int>(vlfuse::kDefaultMinSegmentSize), seg_conn = 6;
  auto* c_segment = app.add_subcommand("segment", "Recompute a version's inventory from its volume");
  c_segment->add_option("--version", seg_version)->required();
  c_segment->add_option("--min-size", seg_min)->capture_default_str();
  c_segment->add_option("--connectivity", seg_conn)->capture_default_str();

  QueryArgs query;
  auto* c_query = app.add_subcommand("query", "Open-vocabulary heatmap query");
  c_query->add_option("--version", query.version)->required();
  c_query->add_option("--text", query.text)->required();
  c_query->add_option("--temperature", query.temperature)->capture_default_str()->check(CLI::PositiveNumber);
  c_query->add_option("--negative", query.negatives, "Extra negative query (repeatable)");
  c_query->add_option("--embeddings", query.embeddings, "Keyed .vlk text embeddings");
  c_query->add_option("--heat-out", query.heat_out, "Write the mesh with heat to this .vmesh");
  c_query->add_option("--top", query.top, "Rows to print (0 = all)")->capture_default_str();

  LabelArgs label;
  auto* c_label = app.add_subcommand("label", "Merge, rename or remember segments");
  c_label->add_option("--version", label.version)->required();
  c_label->add_option("--merge", label.merge, "Comma-separated segment ids; the first survives");
  c_label->add_option("--rename", label.rename, "Segment id to rename");
  c_label->add_option("--remember", label.remember, "Segment id to track");
  c_label->add_option("--name", label.name, "New name for --merge or --rename");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train the in-situ classifier on a version");
  c_train->add_option("--version", train.version)->required();
  c_train->add_option("--epochs", train.epochs, "Epoch cap")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--cooldown", train.cooldown, "Improvement-free epochs before stopping")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_train->add_flag("--fresh", train.fresh, "Ignore the scene's existing model");

  int prev = 0, curr = 0, votes = vlfuse::insitu::kDefaultVotes;
  auto* c_diff = app.add_subcommand("diff", "Compare the personalized objects of two versions");
  c_diff->add_option("--prev", prev)->required();
  c_diff->add_option("--curr", curr)->required();
  c_diff->add_option("--votes", votes)->capture_default_str()->check(CLI::Range(1, 1024));

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP service");
  c_serve->add_option("--host", host)->capture_default_str();
  c_serve->add_option("--port", port)->capture_default_str()->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_synth) return run_synth(g, synth);
    if (*c_fuse) return run_fuse(g, fuse);
    if (*c_segment) return run_segment(g, seg_version, seg_min, seg_conn);
    if (*c_query) return run_query(g, query);
    if (*c_label) return run_label(g, label);
    if (*c_train) return run_train(g, train);
    if (*c_diff) return run_diff(g, prev, curr, votes);
    if (*c_serve) return run_serve(g, host, port);
  } catch (const vlfuse::Error& e) {
    std::cerr << "error (" << vlfuse::to_string(e.kind()) << "): " << e.what() << "\n";
    return e.is_user_error() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
