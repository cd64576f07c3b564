#include "rtcan/checkpoint.hpp"

#include <fstream>

#include "rtcan/errors.hpp"

namespace rtcan::net {

using nlohmann::json;

namespace {
constexpr const char* kFormatTag = "rtcan-checkpoint-v1";
}

json config_to_json(const RtcanConfig& cfg) {
  return json{
      {"input_len", cfg.input_len},
      {"stem_out_channels", cfg.stem_out_channels},
      {"stem_kernel", cfg.stem_kernel},
      {"stem_stride", cfg.stem_stride},
      {"num_clips", cfg.num_clips},
      {"reduction_ratio", cfg.reduction_ratio},
      {"attention_order", to_string(cfg.attention_order)},
      {"rnta_pool_stride", cfg.rnta_pool_stride},
      {"rfe_depth", cfg.rfe_depth},
      {"rfe_channels", cfg.rfe_channels},
      {"sca_in_resblock", cfg.sca_in_resblock},
      {"music_dim", cfg.music_dim},
      {"classifier_hidden", cfg.classifier_hidden},
      {"num_classes", cfg.num_classes},
  };
}

RtcanConfig config_from_json(const json& j) {
  RtcanConfig cfg;
  const json defaults = config_to_json(cfg);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) {
      fail(Err::Usage, "unknown config key '" + key + "'");
    }
    (void)value;
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("input_len", cfg.input_len);
  get("stem_out_channels", cfg.stem_out_channels);
  get("stem_kernel", cfg.stem_kernel);
  get("stem_stride", cfg.stem_stride);
  get("num_clips", cfg.num_clips);
  get("reduction_ratio", cfg.reduction_ratio);
  if (j.contains("attention_order")) {
    cfg.attention_order =
        attention_order_from_string(j.at("attention_order").get<std::string>());
  }
  get("rnta_pool_stride", cfg.rnta_pool_stride);
  get("rfe_depth", cfg.rfe_depth);
  get("rfe_channels", cfg.rfe_channels);
  get("sca_in_resblock", cfg.sca_in_resblock);
  get("music_dim", cfg.music_dim);
  get("classifier_hidden", cfg.classifier_hidden);
  get("num_classes", cfg.num_classes);
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, RtcanModel& model) {
  json tensors = json::object();
  for (auto& [name, t] : model.named_tensors()) {
    tensors[name] = json{{"shape", t.shape()}, {"data", t.vec()}};
  }
  json doc{{"format", kFormatTag},
           {"config", config_to_json(model.config())},
           {"tensors", std::move(tensors)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::IoError, "cannot write " + path);
  out << doc.dump();
}

RtcanModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::IoError, "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(Err::IoError, "checkpoint parse failure: " + std::string(e.what()));
  }
  if (!doc.contains("format") || doc["format"] != kFormatTag) {
    fail(Err::IoError, "not a recognized checkpoint file: " + path);
  }
  RtcanModel model(config_from_json(doc.at("config")), /*seed=*/0);
  const auto& tensors = doc.at("tensors");
  for (auto& [name, t] : model.named_tensors()) {
    if (!tensors.contains(name)) {
      fail(Err::IoError, "checkpoint missing tensor '" + name + "'");
    }
    const auto& entry = tensors.at(name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t.shape()) {
      fail(Err::ShapeMismatch, "checkpoint tensor '" + name + "' has wrong shape");
    }
    auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != t.vec().size()) {
      fail(Err::ShapeMismatch, "checkpoint tensor '" + name + "' has wrong size");
    }
    t.vec() = std::move(data);
  }
  return model;
}

}  // namespace rtcan::net
