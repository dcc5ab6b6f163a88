#pragma once

#include <functional>
#include <optional>
#include <stop_token>

#include "vlfuse/insitu/train.hpp"

namespace vlfuse::insitu {

struct TrainOutcome {
  EdgeConvModel<float> model;
  TrainReport report;
};

inline nlohmann::json report_to_json(const TrainReport& r, bool with_timing = true) {
  nlohmann::json j = {{"epochs_run", r.epochs_run},
                      {"best_accuracy", r.best_accuracy},
                      {"best_epoch", r.best_epoch},
                      {"stopped_reason", to_string(r.stopped_reason)},
                      {"loss_curve", r.loss_curve},
                      {"accuracy_curve", r.accuracy_curve}};
  if (with_timing) j["wall_time"] = r.wall_time;
  return j;
}

/// Trains a model for the personalized segments of `inv`, fine-tuning `base`
/// when given, and records each segment's class index in `insitu_class`.
/// Null graphs come from the volume when available, else from the
/// non-personalized segments.
inline TrainOutcome train_inventory(Inventory& inv, const MultiVolume* vol, const TrainConfig& cfg,
                                    std::optional<EdgeConvModel<float>> base = std::nullopt,
                                    const std::function<void(const TrainProgress&)>& on_epoch = {},
                                    std::stop_token stop = {}) {
  const NullPool pool = vol ? NullPool::build(inv, *vol) : NullPool::from_inventory(inv);
  EdgeConvModel<float> model =
      base ? std::move(*base) : EdgeConvModel<float>(ModelConfig{inv.feature_dim(), {64, 64}, {32}, 5, cfg.seed}, ClassRegistry{});
  auto report = train(model, inv, pool, cfg, on_epoch, stop);
  for (auto& s : inv.segments) {
    if (s.personalized())
      s.insitu_class = model.registry().index_of(s.label());
    else
      s.insitu_class.reset();
  }
  return {std::move(model), std::move(report)};
}

}  // namespace vlfuse::insitu
