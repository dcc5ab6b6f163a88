#pragma once

// Model checkpoint: "VCKP", u32 header length, UTF-8 JSON header (registry,
// shapes, seed, training config), then the parameters as little-endian f32.

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vlfuse/insitu/train.hpp"
#include "vlfuse/io/binary.hpp"

namespace vlfuse::insitu {

inline constexpr const char* kCheckpointSchema = "vlfuse-insitu/1";

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},           {"beta2", c.beta2},
          {"cooldown", c.cooldown},           {"epoch_cap", c.epoch_cap},   {"accuracy_floor", c.accuracy_floor},
          {"graph_nodes", c.graph_nodes},     {"null_radius", c.null_radius}, {"confidence_gate", c.confidence_gate},
          {"seed", c.seed}};
}

inline std::vector<char> encode_checkpoint(const EdgeConvModel<float>& model, const TrainConfig& train_cfg) {
  const auto& c = model.config();
  nlohmann::json header = {{"schema", kCheckpointSchema},
                           {"registry", model.registry().labels()},
                           {"input_dim", c.input_dim},
                           {"edge_widths", c.edge_widths},
                           {"head_widths", c.head_widths},
                           {"k", c.k},
                           {"seed", c.seed},
                           {"parameter_count", model.parameter_count()},
                           {"train", train_config_to_json(train_cfg)}};
  const std::string text = header.dump();
  io::ByteWriter w;
  w.magic("VCKP");
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(std::span<const char>(text.data(), text.size()));
  w.f32s(model.parameters());
  return w.take();
}

struct Checkpoint {
  EdgeConvModel<float> model;
  nlohmann::json header;
};

inline Checkpoint decode_checkpoint(std::span<const char> bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  r.expect_magic("VCKP");
  const auto len = r.u32();
  auto text = r.raw(len);
  Checkpoint out;
  try {
    out.header = nlohmann::json::parse(text.begin(), text.end());
    if (out.header.at("schema").get<std::string>() != kCheckpointSchema)
      fail(ErrorKind::kCorrupt, source + ": unsupported checkpoint schema");
    ModelConfig c;
    c.input_dim = out.header.at("input_dim").get<int>();
    c.edge_widths = out.header.at("edge_widths").get<std::vector<int>>();
    c.head_widths = out.header.at("head_widths").get<std::vector<int>>();
    c.k = out.header.at("k").get<int>();
    c.seed = out.header.at("seed").get<std::uint64_t>();
    auto registry = ClassRegistry::from_labels(out.header.at("registry").get<std::vector<std::string>>());
    out.model = EdgeConvModel<float>(c, std::move(registry));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, source + ": " + e.what());
  }
  if (out.model.parameter_count() != out.header.at("parameter_count").get<std::size_t>() ||
      r.remaining() != out.model.parameter_count() * 4)
    fail(ErrorKind::kCorrupt, source + ": parameter blob size mismatch");
  std::vector<float> params(out.model.parameter_count());
  r.f32s(params);
  for (float p : params)
    if (!std::isfinite(p)) fail(ErrorKind::kCorrupt, source + ": non-finite parameter");
  out.model.set_parameters(params);
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const EdgeConvModel<float>& model,
                            const TrainConfig& train_cfg) {
  io::write_file_atomic(path, encode_checkpoint(model, train_cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto bytes = io::read_file(path);
  return decode_checkpoint(bytes, path.string());
}

}  // namespace vlfuse::insitu
