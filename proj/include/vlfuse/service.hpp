#pragma once

// HTTP/JSON front end over a SceneStore.
//
//   GET  /scenes                      scene list with version counts and store size
//   GET  /scenes/{id}/versions        versions of one scene
//   GET  /versions/{v}/mesh           binary .vmesh
//   GET  /versions/{v}/inventory      inventory summary JSON
//   POST /versions/{v}/query          {text, temperature?, extra_negatives?}; ?format=vmesh for a heat mesh
//   POST /versions/{v}/actions        {action: merge|rename|remember, ...}
//   POST /versions/{v}/train          {seed?, epoch_cap?, cooldown?, fresh?} -> {job_id}
//   GET  /jobs/{j}                    {status, epoch, accuracy, best_accuracy, ...}
//   GET  /diff?prev=&curr=            DiffReport JSON
//
// Errors are {code, message} with a 4xx status for bad requests and 5xx for
// server-side failures.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "vlfuse/actions.hpp"
#include "vlfuse/diff.hpp"
#include "vlfuse/insitu/session.hpp"
#include "vlfuse/query.hpp"
#include "vlfuse/store.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen internals.
#include <httplib.h>

namespace vlfuse {

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return 400;
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kBudgetExceeded: return 413;
    case ErrorKind::kIo:
    case ErrorKind::kCorrupt:
    case ErrorKind::kInternal: return 500;
  }
  return 500;
}

struct ServiceOptions {
  insitu::TrainConfig train;
  DiffOptions diff;
  std::size_t max_body_bytes = std::size_t{64} << 20;
};

class SceneService {
 public:
  enum class JobStatus { kQueued, kRunning, kSucceeded, kFailed, kCancelled };

  static const char* to_string(JobStatus s) {
    switch (s) {
      case JobStatus::kQueued: return "queued";
      case JobStatus::kRunning: return "running";
      case JobStatus::kSucceeded: return "succeeded";
      case JobStatus::kFailed: return "failed";
      case JobStatus::kCancelled: return "cancelled";
    }
    return "failed";
  }

  SceneService(SceneStore& store, ServiceOptions opts = {}) : store_(store), opts_(std::move(opts)) { routes(); }

  ~SceneService() { stop(); }

  SceneService(const SceneService&) = delete;
  SceneService& operator=(const SceneService&) = delete;

  /// Binds to host:port (port 0 picks a free port) and serves on a background
  /// thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) fail(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
    std::map<int, std::shared_ptr<Job>> jobs;
    {
      std::lock_guard lock(jobs_mutex_);
      jobs = jobs_;
    }
    for (auto& [id, job] : jobs) {
      job->worker.request_stop();
      if (job->worker.joinable()) job->worker.join();
    }
  }

  /// Blocks until a job reaches a terminal state.
  nlohmann::json wait_job(int job_id) {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(jobs_mutex_);
      auto it = jobs_.find(job_id);
      if (it == jobs_.end()) fail(ErrorKind::kNotFound, "unknown job " + std::to_string(job_id));
      job = it->second;
    }
    if (job->worker.joinable()) job->worker.join();
    return job_json(*job);
  }

  httplib::Server& server() { return server_; }

 private:
  struct Job {
    int id = 0;
    std::string scene;
    int version = 0;
    std::atomic<JobStatus> status{JobStatus::kQueued};
    std::atomic<int> epoch{0};
    std::atomic<double> accuracy{0.0};
    std::atomic<double> best_accuracy{0.0};
    std::mutex m;
    nlohmann::json report;
    std::string error;
    std::jthread worker;
  };

  static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    // Messages may echo request bytes that are not valid UTF-8.
    res.set_content(j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json; charset=utf-8");
  }

  static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, {{"code", code}, {"message", message}}, status);
  }

  template <typename Fn>
  static httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.kind()), vlfuse::to_string(e.kind()), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "invalid_argument", std::string("malformed JSON: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      } catch (...) {
        send_error(res, 500, "internal", "unknown failure");
      }
    };
  }

  static int int_param(const std::string& text, const char* what) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(text, &pos);
      if (pos != text.size() || v < 0 || v > std::numeric_limits<int>::max()) throw std::invalid_argument(what);
      return static_cast<int>(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, std::string("invalid ") + what + " '" + text + "'");
    }
  }

  static nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) fail(ErrorKind::kInvalidArgument, "request body must be a JSON object");
    return j;
  }

  nlohmann::json version_json(const VersionInfo& v) const {
    nlohmann::json j = {{"version_id", v.version_id}, {"scene", v.scene},         {"timestamp", v.timestamp},
                        {"content_hash", v.content_hash}, {"has_volume", v.has_volume}, {"has_model", v.has_model}};
    if (v.manifest.contains("train_report")) j["train_report"] = v.manifest["train_report"];
    return j;
  }

  nlohmann::json job_json(Job& job) {
    nlohmann::json j = {{"job_id", job.id},
                        {"scene", job.scene},
                        {"version", job.version},
                        {"status", to_string(job.status.load())},
                        {"epoch", job.epoch.load()},
                        {"accuracy", job.accuracy.load()},
                        {"best_accuracy", job.best_accuracy.load()}};
    std::lock_guard lock(job.m);
    if (!job.report.is_null()) j["report"] = job.report;
    if (!job.error.empty()) j["error"] = job.error;
    return j;
  }

  void routes() {
    server_.set_payload_max_length(opts_.max_body_bytes);
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status));
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      send_error(res, 500, "internal", "unhandled failure");
    });

    server_.Get("/scenes", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& s : store_.list_scenes())
        out.push_back({{"scene", s.name}, {"version_count", s.version_count}, {"latest_version", s.latest_version}, {"bytes", s.bytes}});
      send_json(res, {{"scenes", out}});
    }));

    server_.Get(R"(/scenes/([^/]+)/versions)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& v : store_.list_versions(req.matches[1])) out.push_back(version_json(v));
      send_json(res, {{"scene", std::string(req.matches[1])}, {"versions", out}});
    }));

    server_.Get(R"(/versions/([^/]+)/mesh)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto bytes = store_.mesh_bytes(int_param(req.matches[1], "version id"));
      res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
    }));

    server_.Get(R"(/versions/([^/]+)/inventory)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int v = int_param(req.matches[1], "version id");
      auto j = io::inventory_summary(store_.load_inventory(v));
      j["version_id"] = v;
      send_json(res, j);
    }));

    server_.Post(R"(/versions/([^/]+)/query)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int v = int_param(req.matches[1], "version id");
      const auto body = body_json(req);
      if (!body.contains("text") || !body["text"].is_string()) fail(ErrorKind::kInvalidArgument, "query needs a 'text' string");
      const auto text = body["text"].get<std::string>();
      const double tau = body.value("temperature", kDefaultTemperature);
      const auto extras = body.value("extra_negatives", std::vector<std::string>{});
      Mesh mesh = store_.load_mesh(v);
      const Inventory inv = store_.load_inventory(v);
      const auto embedder = scene_embedder(store_.load_embeddings(v), inv.feature_dim());
      auto result = run_query(mesh, inv, *embedder, text, tau, extras);
      if (req.get_param_value("format") == "vmesh") {
        mesh.vertex_heat = result.display_heat;
        const auto bytes = encode_mesh(mesh);
        res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
        return;
      }
      send_json(res, {{"text", result.text},
                      {"temperature", result.temperature},
                      {"negatives", result.negatives},
                      {"ranked", ranked_to_json(result.ranked)},
                      {"heat", result.heat},
                      {"display_heat", result.display_heat}});
    }));

    server_.Post(R"(/versions/([^/]+)/actions)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int v = int_param(req.matches[1], "version id");
      const auto body = body_json(req);
      const auto action = body.value("action", std::string{});
      auto summary = store_.mutate_inventory(v, [&](Inventory& inv) {
        if (action == "merge") {
          const auto ids = body.at("segment_ids").get<std::vector<int>>();
          return io::segment_summary(apply_merge(inv, ids, body.value("name", std::string{})), inv);
        }
        if (action == "rename")
          return io::segment_summary(apply_rename(inv, body.at("segment_id").get<int>(), body.at("name").get<std::string>()), inv);
        if (action == "remember") return io::segment_summary(apply_remember(inv, body.at("segment_id").get<int>()), inv);
        fail(ErrorKind::kInvalidArgument, "unknown action '" + action + "'; expected merge, rename or remember");
      });
      send_json(res, {{"version_id", v}, {"segment", summary}});
    }));

    server_.Post(R"(/versions/([^/]+)/train)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int v = int_param(req.matches[1], "version id");
      const auto body = body_json(req);
      insitu::TrainConfig cfg = opts_.train;
      cfg.seed = body.value("seed", cfg.seed);
      cfg.epoch_cap = body.value("epoch_cap", cfg.epoch_cap);
      cfg.cooldown = body.value("cooldown", cfg.cooldown);
      require(cfg.epoch_cap >= 1 && cfg.cooldown >= 0, "invalid epoch_cap or cooldown");
      const bool fresh = body.value("fresh", false);
      const auto info = store_.info(v);
      if (store_.load_inventory(v).personalized().empty())
        fail(ErrorKind::kInvalidArgument, "version has no personalized segments to train on");
      send_json(res, {{"job_id", launch(info, cfg, fresh)}}, 202);
    }));

    server_.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int id = int_param(req.matches[1], "job id");
      std::shared_ptr<Job> job;
      {
        std::lock_guard lock(jobs_mutex_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) fail(ErrorKind::kNotFound, "unknown job " + std::to_string(id));
        job = it->second;
      }
      send_json(res, job_json(*job));
    }));

    server_.Get("/diff", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("prev") || !req.has_param("curr")) fail(ErrorKind::kInvalidArgument, "diff needs prev and curr");
      const int prev = int_param(req.get_param_value("prev"), "prev version");
      const int curr = int_param(req.get_param_value("curr"), "curr version");
      send_json(res, diff_to_json(diff_stored(store_, prev, curr, opts_.diff)));
    }));
  }

 public:
  /// Diff of two stored versions using prev's model, or the newest model of
  /// prev's scene when prev carries none.
  static DiffReport diff_stored(const SceneStore& store, int prev, int curr, const DiffOptions& opts) {
    const Inventory prev_inv = store.load_inventory(prev);
    const Inventory curr_inv = store.load_inventory(curr);
    if (prev_inv.personalized().empty()) return DiffReport{prev, curr, {}, {}};
    auto ckpt = store.load_model(prev);
    if (!ckpt) {
      if (auto mv = store.latest_model_version(store.info(prev).scene)) ckpt = store.load_model(*mv);
    }
    if (!ckpt) fail(ErrorKind::kConflict, "no trained model for version " + std::to_string(prev) + "; train it first");
    return diff_versions(ckpt->model, prev_inv, curr_inv, opts, prev, curr);
  }

 private:
  int launch(const VersionInfo& info, const insitu::TrainConfig& cfg, bool fresh) {
    std::lock_guard lock(jobs_mutex_);
    for (const auto& [id, j] : jobs_) {
      const auto s = j->status.load();
      if (j->scene == info.scene && (s == JobStatus::kQueued || s == JobStatus::kRunning))
        fail(ErrorKind::kConflict, "a training job is already running for scene " + info.scene);
    }
    auto job = std::make_shared<Job>();
    job->id = next_job_++;
    job->scene = info.scene;
    job->version = info.version_id;
    jobs_[job->id] = job;
    job->worker = std::jthread([this, job, cfg, fresh](std::stop_token stop) { run_job(*job, cfg, fresh, stop); });
    return job->id;
  }

  void run_job(Job& job, const insitu::TrainConfig& cfg, bool fresh, std::stop_token stop) {
    job.status = JobStatus::kRunning;
    try {
      Inventory inv = store_.load_inventory(job.version);
      const auto info = store_.info(job.version);
      std::optional<MultiVolume> vol;
      if (info.has_volume) vol = store_.load_volume(job.version);
      std::optional<insitu::EdgeConvModel<float>> base;
      if (!fresh) {
        if (auto mv = store_.latest_model_version(job.scene)) {
          auto ckpt = store_.load_model(*mv);
          if (ckpt && ckpt->model.config().input_dim == inv.feature_dim()) base = std::move(ckpt->model);
        }
      }
      auto outcome = insitu::train_inventory(
          inv, vol ? &*vol : nullptr, cfg, std::move(base),
          [&](const insitu::TrainProgress& p) {
            job.epoch = p.epoch;
            job.accuracy = p.accuracy;
            if (p.accuracy > job.best_accuracy) job.best_accuracy = p.accuracy;
          },
          stop);
      job.best_accuracy = outcome.report.best_accuracy;
      if (outcome.report.stopped_reason == insitu::StopReason::kUser) {
        job.status = JobStatus::kCancelled;
        return;
      }
      const auto report = insitu::report_to_json(outcome.report);
      store_.save_model(job.version, outcome.model, cfg, insitu::report_to_json(outcome.report, false));
      store_.mutate_inventory(job.version, [&](Inventory& current) {
        for (auto& s : current.segments)
          s.insitu_class = s.personalized() ? outcome.model.registry().index_of(s.label()) : std::nullopt;
      });
      {
        std::lock_guard lock(job.m);
        job.report = report;
      }
      job.status = JobStatus::kSucceeded;
    } catch (const std::exception& e) {
      std::lock_guard lock(job.m);
      job.error = e.what();
      job.status = JobStatus::kFailed;
    }
  }

  SceneStore& store_;
  ServiceOptions opts_;
  httplib::Server server_;
  std::thread thread_;
  std::mutex jobs_mutex_;
  std::map<int, std::shared_ptr<Job>> jobs_;
  int next_job_ = 1;
};

}  // namespace vlfuse
