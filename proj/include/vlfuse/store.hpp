#pragma once

// Versioned on-disk scene store.
//
//   <root>/store.json                               manifest {schema, layout}
//   <root>/staging/                                 in-flight commits
//   <root>/scenes/<scene>/versions/<id>/version.json
//   <root>/scenes/<scene>/versions/<id>/inventory.rN.json, inventory.rN.vlf
//   <root>/scenes/<scene>/versions/<id>/mesh.vmesh, volume.vvol, model.rN.vckp
//
// A commit is staged in full and published by a single directory rename.
// Later edits to a version (inventory actions, a trained model) write new
// revision files and then atomically replace version.json, so a crash leaves
// either the old or the new revision visible.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "vlfuse/insitu/checkpoint.hpp"
#include "vlfuse/io/inventory_io.hpp"
#include "vlfuse/io/volume_io.hpp"
#include "vlfuse/mesh.hpp"

namespace vlfuse {

inline constexpr const char* kStoreSchema = "vlfuse-store/1";
inline constexpr const char* kVersionSchema = "vlfuse-version/1";
inline constexpr const char* kStoreEnvVar = "VLFUSE_STORE";
inline constexpr const char* kFixedTimeEnvVar = "VLFUSE_FIXED_TIME";

inline std::string sha256_hex(std::span<const char> data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::kInternal, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

/// Seconds since the epoch, or the value of VLFUSE_FIXED_TIME when set.
inline std::int64_t default_clock() {
  if (const char* fixed = std::getenv(kFixedTimeEnvVar); fixed && *fixed) return std::strtoll(fixed, nullptr, 10);
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

struct VersionInfo {
  int version_id = 0;
  std::string scene;
  std::int64_t timestamp = 0;
  std::string content_hash;
  bool has_volume = false;
  bool has_model = false;
  std::filesystem::path dir;
  nlohmann::json manifest;

  std::filesystem::path file(const std::string& role) const { return dir / manifest.at("files").at(role).at("name").get<std::string>(); }
  bool has(const std::string& role) const { return manifest.at("files").contains(role); }
};

struct SceneSummary {
  std::string name;
  std::size_t version_count = 0;
  int latest_version = 0;
  std::uintmax_t bytes = 0;
};

class SceneStore {
 public:
  explicit SceneStore(std::filesystem::path root, std::function<std::int64_t()> clock = default_clock)
      : root_(std::move(root)), clock_(std::move(clock)) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(root_ / "scenes", ec);
    if (ec) fail(ErrorKind::kIo, "cannot create store at " + root_.string() + ": " + ec.message());
    const auto manifest = root_ / "store.json";
    if (fs::exists(manifest)) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(io::read_text(manifest));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::kCorrupt, manifest.string() + ": " + e.what());
      }
      if (j.value("schema", "") != kStoreSchema) fail(ErrorKind::kCorrupt, "unsupported store schema in " + manifest.string());
    } else {
      io::write_text_atomic(manifest, nlohmann::json{{"schema", kStoreSchema}, {"layout", 1}}.dump(1) + "\n");
    }
    fs::remove_all(root_ / "staging", ec);
    fs::create_directories(root_ / "staging");
    rescan();
  }

  const std::filesystem::path& root() const { return root_; }

  std::vector<SceneSummary> list_scenes() const {
    std::shared_lock lock(rw_);
    std::map<std::string, SceneSummary> by_name;
    for (const auto& [id, info] : index_) {
      auto& s = by_name[info.scene];
      s.name = info.scene;
      s.version_count += 1;
      s.latest_version = std::max(s.latest_version, id);
      for (const auto& entry : std::filesystem::recursive_directory_iterator(info.dir))
        if (entry.is_regular_file()) s.bytes += entry.file_size();
    }
    std::vector<SceneSummary> out;
    for (auto& [name, s] : by_name) out.push_back(s);
    return out;
  }

  std::vector<VersionInfo> list_versions(const std::string& scene) const {
    std::shared_lock lock(rw_);
    std::vector<VersionInfo> out;
    for (const auto& [id, info] : index_)
      if (info.scene == scene) out.push_back(info);
    if (out.empty()) fail(ErrorKind::kNotFound, "unknown scene " + scene);
    return out;
  }

  VersionInfo info(int version_id) const {
    std::shared_lock lock(rw_);
    return info_locked(version_id);
  }

  std::optional<int> latest_version() const {
    std::shared_lock lock(rw_);
    if (index_.empty()) return std::nullopt;
    return index_.rbegin()->first;
  }

  /// Writes a new immutable version and returns its id.
  int commit(const std::string& scene, const Inventory& inv, const Mesh& mesh, const MultiVolume* volume = nullptr,
             const insitu::EdgeConvModel<float>* model = nullptr, const insitu::TrainConfig& train_cfg = {}) {
    validate_scene_name(scene);
    inv.validate();
    mesh.validate();
    std::vector<std::pair<std::string, std::pair<std::string, std::vector<char>>>> files;
    files.push_back({"inventory", {"inventory.r1.json", to_bytes(io::inventory_to_json(inv).dump(1))}});
    files.push_back({"features", {"inventory.r1.vlf", io::encode_vlf(io::inventory_features(inv))}});
    files.push_back({"mesh", {"mesh.vmesh", encode_mesh(mesh)}});
    if (volume) files.push_back({"volume", {"volume.vvol", io::encode_volume(*volume)}});
    if (model) files.push_back({"model", {"model.r1.vckp", insitu::encode_checkpoint(*model, train_cfg)}});

    std::lock_guard commit_lock(commit_mutex_);
    std::unique_lock lock(rw_);
    const int id = index_.empty() ? 1 : index_.rbegin()->first + 1;
    std::int64_t ts = clock_();
    if (!index_.empty()) ts = std::max(ts, index_.rbegin()->second.timestamp);

    namespace fs = std::filesystem;
    const fs::path staging = root_ / "staging" / std::to_string(id);
    fs::remove_all(staging);
    fs::create_directories(staging);
    nlohmann::json manifest = {{"schema", kVersionSchema}, {"version_id", id}, {"scene", scene}, {"timestamp", ts},
                               {"revision", 1}, {"files", nlohmann::json::object()}};
    for (const auto& [role, entry] : files) {
      io::write_file_atomic(staging / entry.first, entry.second);
      manifest["files"][role] = {{"name", entry.first}, {"sha256", sha256_hex(entry.second)}};
    }
    manifest["content_hash"] = content_hash(manifest["files"]);
    io::write_text_atomic(staging / "version.json", manifest.dump(1) + "\n");
    const fs::path final_dir = version_dir(scene, id);
    fs::create_directories(final_dir.parent_path());
    std::error_code ec;
    fs::rename(staging, final_dir, ec);
    if (ec) fail(ErrorKind::kIo, "cannot publish version " + std::to_string(id) + ": " + ec.message());
    index_[id] = make_info(final_dir, manifest);
    return id;
  }

  Inventory load_inventory(int version_id) const {
    std::shared_lock lock(rw_);
    const auto v = info_locked(version_id);
    const auto json_bytes = checked_read(v, "inventory");
    const auto feat_bytes = checked_read(v, "features");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_bytes.begin(), json_bytes.end());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kCorrupt, v.file("inventory").string() + ": " + e.what());
    }
    const auto feats = io::decode_vlf(feat_bytes, v.file("features").string());
    return io::inventory_from_json(j, feats.tensor, v.file("inventory").string());
  }

  std::vector<char> mesh_bytes(int version_id) const {
    std::shared_lock lock(rw_);
    return checked_read(info_locked(version_id), "mesh");
  }

  Mesh load_mesh(int version_id) const {
    const auto bytes = mesh_bytes(version_id);
    return decode_mesh(bytes, "version " + std::to_string(version_id) + " mesh");
  }

  MultiVolume load_volume(int version_id) const {
    std::shared_lock lock(rw_);
    const auto v = info_locked(version_id);
    if (!v.has_volume) fail(ErrorKind::kNotFound, "version " + std::to_string(version_id) + " has no volume");
    const auto bytes = checked_read(v, "volume");
    return io::decode_volume(bytes, v.file("volume").string());
  }

  std::optional<insitu::Checkpoint> load_model(int version_id) const {
    std::shared_lock lock(rw_);
    const auto v = info_locked(version_id);
    if (!v.has_model) return std::nullopt;
    const auto bytes = checked_read(v, "model");
    return insitu::decode_checkpoint(bytes, v.file("model").string());
  }

  /// Most recent version of `scene` that carries a trained model.
  std::optional<int> latest_model_version(const std::string& scene) const {
    std::shared_lock lock(rw_);
    for (auto it = index_.rbegin(); it != index_.rend(); ++it)
      if (it->second.scene == scene && it->second.has_model) return it->first;
    return std::nullopt;
  }

  /// Loads, edits and rewrites a version's inventory; edits to one scene are
  /// serialized.
  template <typename Fn>
  auto mutate_inventory(int version_id, Fn&& fn) {
    const auto scene = info(version_id).scene;
    std::lock_guard scene_lock(scene_mutex(scene));
    Inventory inv = load_inventory(version_id);
    if constexpr (std::is_void_v<decltype(fn(inv))>) {
      fn(inv);
      replace_inventory(version_id, inv);
    } else {
      auto result = fn(inv);
      replace_inventory(version_id, inv);
      return result;
    }
  }

  /// Writes a new inventory revision for a version.
  void replace_inventory(int version_id, const Inventory& inv) {
    inv.validate();
    replace_files(version_id, {{"inventory", {"inventory", ".json", to_bytes(io::inventory_to_json(inv).dump(1))}},
                               {"features", {"inventory", ".vlf", io::encode_vlf(io::inventory_features(inv))}}},
                  {});
  }

  /// Attaches a trained model (and its report) to a version.
  void save_model(int version_id, const insitu::EdgeConvModel<float>& model, const insitu::TrainConfig& cfg,
                  const nlohmann::json& report = nullptr) {
    replace_files(version_id, {{"model", {"model", ".vckp", insitu::encode_checkpoint(model, cfg)}}}, report);
  }

  /// Stores keyed text embeddings next to a version for later queries.
  void attach_embeddings(int version_id, const io::KeyedVectors& entries) {
    require(!entries.empty(), "no embeddings to attach");
    replace_files(version_id, {{"embeddings", {"embeddings", ".vlk", io::encode_vlk(entries, static_cast<std::uint32_t>(entries.begin()->second.size()))}}},
                  nullptr);
  }

  std::optional<io::KeyedVectors> load_embeddings(int version_id) const {
    std::shared_lock lock(rw_);
    const auto v = info_locked(version_id);
    if (!v.has("embeddings")) return std::nullopt;
    const auto bytes = checked_read(v, "embeddings");
    return io::decode_vlk(bytes, v.file("embeddings").string());
  }

  std::mutex& scene_mutex(const std::string& scene) {
    std::lock_guard lock(scene_locks_mutex_);
    auto& m = scene_locks_[scene];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

 private:
  struct NewFile {
    std::string stem;
    std::string ext;
    std::vector<char> bytes;
  };

  static std::vector<char> to_bytes(const std::string& s) { return {s.begin(), s.end()}; }

  static void validate_scene_name(const std::string& scene) {
    require(!scene.empty() && scene.size() <= 128, "scene name must be 1-128 characters");
    for (char c : scene)
      require(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.',
              "scene name may only contain letters, digits, '-', '_' and '.'");
    require(scene != "." && scene != "..", "invalid scene name");
  }

  static std::string content_hash(const nlohmann::json& files) {
    std::string acc;
    for (const auto& [role, entry] : files.items()) acc += role + "\n" + entry.at("sha256").get<std::string>() + "\n";
    return sha256_hex(acc);
  }

  std::filesystem::path version_dir(const std::string& scene, int id) const {
    return root_ / "scenes" / scene / "versions" / std::to_string(id);
  }

  static VersionInfo make_info(const std::filesystem::path& dir, const nlohmann::json& m) {
    VersionInfo v;
    v.version_id = m.at("version_id").get<int>();
    v.scene = m.at("scene").get<std::string>();
    v.timestamp = m.at("timestamp").get<std::int64_t>();
    v.content_hash = m.at("content_hash").get<std::string>();
    v.has_volume = m.at("files").contains("volume");
    v.has_model = m.at("files").contains("model");
    v.dir = dir;
    v.manifest = m;
    return v;
  }

  void rescan() {
    namespace fs = std::filesystem;
    index_.clear();
    for (const auto& scene : fs::directory_iterator(root_ / "scenes")) {
      if (!scene.is_directory() || !fs::exists(scene.path() / "versions")) continue;
      for (const auto& vdir : fs::directory_iterator(scene.path() / "versions")) {
        const auto mpath = vdir.path() / "version.json";
        if (!fs::exists(mpath)) continue;
        nlohmann::json m;
        try {
          m = nlohmann::json::parse(io::read_text(mpath));
          if (m.value("schema", "") != kVersionSchema) fail(ErrorKind::kCorrupt, mpath.string() + ": unsupported schema");
          auto info = make_info(vdir.path(), m);
          if (index_.count(info.version_id)) fail(ErrorKind::kCorrupt, "duplicate version id " + std::to_string(info.version_id));
          index_[info.version_id] = std::move(info);
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorKind::kCorrupt, mpath.string() + ": " + e.what());
        }
        remove_unreferenced(vdir.path(), m);
      }
    }
  }

  static void remove_unreferenced(const std::filesystem::path& dir, const nlohmann::json& m) {
    std::set<std::string> keep = {"version.json"};
    for (const auto& [role, entry] : m.at("files").items()) keep.insert(entry.at("name").get<std::string>());
    std::vector<std::filesystem::path> stale;
    for (const auto& f : std::filesystem::directory_iterator(dir))
      if (!keep.count(f.path().filename().string())) stale.push_back(f.path());
    for (const auto& p : stale) std::filesystem::remove_all(p);
  }

  VersionInfo info_locked(int version_id) const {
    auto it = index_.find(version_id);
    if (it == index_.end()) fail(ErrorKind::kNotFound, "unknown version " + std::to_string(version_id));
    return it->second;
  }

  static std::vector<char> checked_read(const VersionInfo& v, const std::string& role) {
    const auto path = v.file(role);
    auto bytes = io::read_file(path);
    if (sha256_hex(bytes) != v.manifest.at("files").at(role).at("sha256").get<std::string>())
      fail(ErrorKind::kCorrupt, "checksum mismatch: " + path.string());
    return bytes;
  }

  void replace_files(int version_id, const std::map<std::string, NewFile>& files, const nlohmann::json& report) {
    std::lock_guard commit_lock(commit_mutex_);
    VersionInfo v = info(version_id);
    nlohmann::json m = v.manifest;
    const int rev = m.value("revision", 1) + 1;
    m["revision"] = rev;
    std::vector<std::filesystem::path> old;
    for (const auto& [role, f] : files) {
      const std::string name = f.stem + ".r" + std::to_string(rev) + f.ext;
      io::write_file_atomic(v.dir / name, f.bytes);
      if (m["files"].contains(role)) old.push_back(v.dir / m["files"][role]["name"].get<std::string>());
      m["files"][role] = {{"name", name}, {"sha256", sha256_hex(f.bytes)}};
    }
    if (!report.is_null()) m["train_report"] = report;
    m["content_hash"] = content_hash(m["files"]);
    std::unique_lock lock(rw_);
    io::write_text_atomic(v.dir / "version.json", m.dump(1) + "\n");
    index_[version_id] = make_info(v.dir, m);
    for (const auto& p : old) std::filesystem::remove(p);
  }

  std::filesystem::path root_;
  std::function<std::int64_t()> clock_;
  std::map<int, VersionInfo> index_;
  mutable std::shared_mutex rw_;
  std::mutex commit_mutex_;
  std::mutex scene_locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> scene_locks_;
};

/// Store root from an explicit flag, else VLFUSE_STORE, else ./store.
inline std::filesystem::path resolve_store_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kStoreEnvVar); env && *env) return env;
  return "store";
}

}  // namespace vlfuse
