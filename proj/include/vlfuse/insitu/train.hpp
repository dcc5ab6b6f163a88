#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "vlfuse/insitu/model.hpp"

namespace vlfuse::insitu {

/// Adaptive moment estimation over a flat parameter vector.
template <typename T>
class Adam {
 public:
  Adam(std::size_t size, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<T> params, std::span<const T> grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "optimizer size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] = static_cast<T>(static_cast<double>(params[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

enum class StopReason { kCooldown, kCap, kUser };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kCooldown: return "cooldown";
    case StopReason::kCap: return "cap";
    case StopReason::kUser: return "user";
  }
  return "cap";
}

inline constexpr int kDefaultVotes = 16;
inline constexpr double kMinVoteShare = 0.5;
inline constexpr double kMinMeanSoftmax = 0.6;

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int cooldown = 10;
  int epoch_cap = 500;
  double accuracy_floor = 0.95;
  int graph_nodes = kDefaultGraphNodes;
  int null_radius = kDefaultNullRadius;
  // A training graph counts as correct when its argmax is the label and the
  // label's softmax reaches this value.
  double confidence_gate = kMinMeanSoftmax;
  std::uint64_t seed = 0;
};

struct TrainReport {
  int epochs_run = 0;
  double best_accuracy = 0.0;
  StopReason stopped_reason = StopReason::kCap;
  double wall_time = 0.0;  // seconds
  std::vector<double> loss_curve;
  std::vector<double> accuracy_curve;
  int best_epoch = 0;  // 1-based epoch at which best_accuracy was first reached
};

struct TrainProgress {
  int epoch = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Positive classes of an inventory: one registry entry per distinct
/// personalized label, in segment order.
inline ClassRegistry registry_for(const Inventory& inv) {
  ClassRegistry r;
  for (const auto* s : inv.personalized()) r.add(s->label());
  return r;
}

/// Trains (or fine-tunes) `model` on the personalized segments of `inv`
/// against null graphs drawn from `null_pool`. Each epoch samples one fresh
/// graph per personalized segment plus as many null graphs and takes one
/// optimizer step on the full batch. Stops once accuracy has reached the floor
/// and has not improved for `cooldown` epochs, at the epoch cap, or on request.
inline TrainReport train(EdgeConvModel<float>& model, const Inventory& inv, const NullPool& null_pool,
                         const TrainConfig& cfg, const std::function<void(const TrainProgress&)>& on_epoch = {},
                         std::stop_token stop = {}) {
  const auto positives = inv.personalized();
  if (positives.empty()) fail(ErrorKind::kInvalidArgument, "no personalized segments to train on");
  require(cfg.epoch_cap >= 1 && cfg.cooldown >= 0, "invalid epoch cap or cooldown");
  require(cfg.confidence_gate >= 0.0 && cfg.confidence_gate < 1.0, "confidence gate must lie in [0, 1)");
  require(model.config().input_dim == inv.feature_dim(), "model input dim differs from inventory feature dim");

  ClassRegistry registry = model.registry();
  for (const auto* s : positives) registry.add(s->label());
  model.extend_registry(registry, cfg.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<int> labels_of;
  for (const auto* s : positives) labels_of.push_back(*registry.index_of(s->label()));

  const auto start = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  Adam<float> opt(model.parameter_count(), cfg.learning_rate, cfg.beta1, cfg.beta2);
  TrainReport report;
  int since_improvement = 0;
  const int dim = inv.feature_dim();
  std::vector<ObjectGraph> batch;
  std::vector<int> labels;
  std::vector<float> grad;
  std::vector<EdgeConvModel<float>::Vector> logits;
  for (int epoch = 1; epoch <= cfg.epoch_cap; ++epoch) {
    if (stop.stop_requested()) {
      report.stopped_reason = StopReason::kUser;
      break;
    }
    batch.clear();
    labels.clear();
    for (std::size_t p = 0; p < positives.size(); ++p) {
      batch.push_back(sample_object_graph(*positives[p], dim, cfg.graph_nodes, rng));
      labels.push_back(labels_of[p]);
    }
    for (std::size_t p = 0; p < positives.size(); ++p) {
      batch.push_back(sample_null_graph(null_pool, cfg.graph_nodes, rng, cfg.null_radius));
      labels.push_back(0);
    }
    const float loss = model.loss_and_grad(batch, labels, &grad, &logits);
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Eigen::Index arg;
      logits[b].maxCoeff(&arg);
      if (static_cast<int>(arg) != labels[b]) continue;
      if (softmax<float>(logits[b])[static_cast<std::size_t>(arg)] >= cfg.confidence_gate) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(batch.size());
    opt.step(model.parameters(), grad);

    report.epochs_run = epoch;
    report.loss_curve.push_back(loss);
    report.accuracy_curve.push_back(acc);
    if (epoch == 1 || acc > report.best_accuracy) {
      report.best_accuracy = acc;
      report.best_epoch = epoch;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (on_epoch) on_epoch({epoch, acc, loss});
    if (report.best_accuracy >= cfg.accuracy_floor && since_improvement >= cfg.cooldown) {
      report.stopped_reason = StopReason::kCooldown;
      break;
    }
    if (epoch == cfg.epoch_cap) report.stopped_reason = StopReason::kCap;
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

struct Classification {
  std::optional<int> class_index;  // nullopt = null / not re-identified
  std::string label;               // registry label, "null" when not re-identified
  double confidence = 0.0;         // vote share x mean winning-class softmax
  double vote_share = 0.0;
  double mean_softmax = 0.0;
};

/// Decision rule over per-class vote counts and summed softmax. A label is
/// emitted only for a unique non-null winner holding at least half the votes
/// with mean softmax of at least 0.6; ties resolve to null.
inline Classification decide_votes(const ClassRegistry& registry, std::span<const int> count,
                                   std::span<const double> prob_sum, int votes) {
  require(count.size() == prob_sum.size() && static_cast<int>(count.size()) == registry.size(),
          "vote tally size differs from registry");
  require(votes >= 1, "need at least one vote");
  const auto top = std::max_element(count.begin(), count.end());
  const int winner = static_cast<int>(top - count.begin());
  const bool tie = std::count(count.begin(), count.end(), *top) > 1;
  Classification out;
  out.vote_share = static_cast<double>(*top) / votes;
  out.mean_softmax = prob_sum[static_cast<std::size_t>(winner)] / votes;
  out.label = kNullLabel;
  if (tie || winner == 0 || out.vote_share < kMinVoteShare || out.mean_softmax < kMinMeanSoftmax) return out;
  out.class_index = winner;
  out.label = registry.label(winner);
  out.confidence = out.vote_share * out.mean_softmax;
  return out;
}

/// Majority vote over `votes` graphs sampled from the segment.
template <typename T>
Classification classify_segment(const EdgeConvModel<T>& model, const ObjectSegment& seg, int dim, int votes, Rng& rng,
                                int graph_nodes = kDefaultGraphNodes) {
  require(model.num_outputs() >= 2, "model has not been trained on any label");
  require(votes >= 1, "need at least one vote");
  std::vector<int> count(static_cast<std::size_t>(model.num_outputs()), 0);
  std::vector<double> prob_sum(static_cast<std::size_t>(model.num_outputs()), 0.0);
  for (int v = 0; v < votes; ++v) {
    const auto g = sample_object_graph(seg, dim, graph_nodes, rng);
    const auto z = model.forward(g);
    const auto p = softmax<T>(z);
    Eigen::Index arg;
    z.maxCoeff(&arg);
    ++count[static_cast<std::size_t>(arg)];
    for (std::size_t c = 0; c < p.size(); ++c) prob_sum[c] += p[c];
  }
  return decide_votes(model.registry(), count, prob_sum, votes);
}

}  // namespace vlfuse::insitu
