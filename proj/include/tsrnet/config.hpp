#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsrnet/dataset.hpp"
#include "tsrnet/detection.hpp"
#include "tsrnet/training.hpp"

namespace tsrnet {

/// Everything a run can be configured with. Paths are CLI flags only.
struct RunConfig {
  SyntheticSpec synth;
  TrainConfig train;
  ModelConfig model;
  DetectConfig detect;
  std::string thresholds = "thumos";
};

enum class KeyType { Int, Real, Bool, String };

/// One dotted configuration key. The same table drives JSON parsing, JSON
/// output and CLI flag registration, so keys and flags map one to one.
struct ConfigKey {
  std::string name;
  KeyType type;
  std::string help;
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

namespace detail {

template <typename T>
T json_as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("bool");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("int");
      if constexpr (std::is_unsigned_v<T>)
        if (v.get<long long>() < 0) throw std::invalid_argument("negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("number");
    } else {
      if (!v.is_string()) throw std::invalid_argument("string");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "config key '" + key + "' has the wrong type: " + v.dump());
  }
}

}  // namespace detail

inline const std::vector<ConfigKey>& config_keys() {
  using nlohmann::json;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
#define TSR_KEY(NAME, TYPE, CPPTYPE, FIELD, HELP)                                                        \
  k.push_back({NAME, KeyType::TYPE, HELP, [](const RunConfig& c) { return json(c.FIELD); },             \
               [](RunConfig& c, const json& v) { c.FIELD = detail::json_as<CPPTYPE>(v, NAME); }})
    TSR_KEY("synth.classes", Int, int, synth.num_classes, "number of action classes");
    TSR_KEY("synth.dim", Int, std::size_t, synth.dim, "feature dimension d");
    TSR_KEY("synth.source_per_class", Int, std::size_t, synth.source_per_class, "trimmed source videos per class");
    TSR_KEY("synth.target_train", Int, std::size_t, synth.target_train, "untrimmed training videos");
    TSR_KEY("synth.target_test", Int, std::size_t, synth.target_test, "untrimmed test videos");
    TSR_KEY("synth.frames_min", Int, std::size_t, synth.frames_min, "minimum untrimmed frame count");
    TSR_KEY("synth.frames_max", Int, std::size_t, synth.frames_max, "maximum untrimmed frame count");
    TSR_KEY("synth.trimmed_frames_min", Int, std::size_t, synth.trimmed_frames_min, "minimum trimmed frame count");
    TSR_KEY("synth.trimmed_frames_max", Int, std::size_t, synth.trimmed_frames_max, "maximum trimmed frame count");
    TSR_KEY("synth.action_fraction_min", Real, double, synth.action_fraction_min, "minimum share of action frames");
    TSR_KEY("synth.action_fraction_max", Real, double, synth.action_fraction_max, "maximum share of action frames");
    TSR_KEY("synth.runs_min", Int, int, synth.runs_min, "minimum action runs per untrimmed video");
    TSR_KEY("synth.runs_max", Int, int, synth.runs_max, "maximum action runs per untrimmed video");
    TSR_KEY("synth.separation", Real, double, synth.separation, "minimum distance between class means");
    TSR_KEY("synth.noise", Real, double, synth.noise, "per-dimension noise standard deviation");
    TSR_KEY("synth.shift", Real, double, synth.shift, "magnitude of the source-domain offset");
    TSR_KEY("synth.fps", Real, double, synth.fps, "frames per second of generated videos");
    TSR_KEY("synth.seed", Int, std::uint64_t, synth.seed, "generator seed");
    TSR_KEY("train.alpha", Real, double, train.alpha, "smoothness regularizer weight");
    TSR_KEY("train.beta", Real, double, train.beta, "sparsity regularizer weight");
    TSR_KEY("train.batch_size", Int, std::size_t, train.batch_size, "videos per SGD step");
    TSR_KEY("train.momentum", Real, double, train.momentum, "SGD momentum");
    TSR_KEY("train.lr_rgb", Real, double, train.lr_rgb, "initial learning rate, RGB stream");
    TSR_KEY("train.lr_flow", Real, double, train.lr_flow, "initial learning rate, flow stream");
    TSR_KEY("train.lr_decay_every", Int, std::size_t, train.lr_decay_every, "iterations between learning-rate decays");
    TSR_KEY("train.lr_decay_factor", Real, double, train.lr_decay_factor, "learning-rate divisor per decay");
    TSR_KEY("train.dropout", Real, double, train.dropout, "dropout rate on the classifier input");
    TSR_KEY("train.iterations", Int, std::size_t, train.iterations, "SGD iterations per stream");
    TSR_KEY("train.seed", Int, std::uint64_t, train.seed, "training seed");
    TSR_KEY("train.label_fraction", Real, double, train.label_fraction, "share of target-train videos with labels");
    TSR_KEY("transfer.enabled", Bool, bool, train.transfer_enabled, "enable the MMD transfer loss");
    TSR_KEY("transfer.fc2_enabled", Bool, bool, train.fc2_enabled, "include the post-FC1 MMD term");
    TSR_KEY("transfer.init_from_source", Bool, bool, train.init_from_source, "start target training from the source weights");
    TSR_KEY("attention.hidden", Int, std::size_t, model.attention_hidden, "attention hidden size b");
    TSR_KEY("attention.heads", Int, std::size_t, model.heads, "attention heads r");
    TSR_KEY("classifier.hidden", Int, std::size_t, model.classifier_hidden, "classifier hidden width h");
    TSR_KEY("detect.theta", Real, double, detect.theta, "RGB weight when fusing frame scores");
    TSR_KEY("detect.threshold", Real, double, detect.threshold, "fused frame-score threshold");
    TSR_KEY("eval.thresholds", String, std::string, thresholds, "IoU grid: lo:hi:step, list, thumos or activitynet");
#undef TSR_KEY
    k.push_back({"attention.mode", KeyType::String, "learned or uniform",
                 [](const RunConfig& c) { return json(attention_mode_name(c.model.attention.mode)); },
                 [](RunConfig& c, const json& v) {
                   c.model.attention.mode = parse_attention_mode(detail::json_as<std::string>(v, "attention.mode"));
                 }});
    k.push_back({"attention.sparsity_mode", KeyType::String, "paper-literal or sigmoid",
                 [](const RunConfig& c) { return json(sparsity_mode_name(c.model.attention.sparsity)); },
                 [](RunConfig& c, const json& v) {
                   c.model.attention.sparsity = parse_sparsity_mode(detail::json_as<std::string>(v, "attention.sparsity_mode"));
                 }});
    k.push_back({"kernel.sigma", KeyType::String, "Gaussian bandwidth (number) or \"median\"",
                 [](const RunConfig& c) { return c.train.kernel.sigma ? json(*c.train.kernel.sigma) : json("median"); },
                 [](RunConfig& c, const json& v) {
                   if (v.is_string()) {
                     const auto s = v.get<std::string>();
                     if (s == "median") {
                       c.train.kernel.sigma.reset();
                       return;
                     }
                     try {
                       std::size_t pos = 0;
                       c.train.kernel.sigma = std::stod(s, &pos);
                       if (pos != s.size()) throw std::invalid_argument(s);
                     } catch (const std::exception&) {
                       fail(ErrorKind::Config, "kernel.sigma must be a number or \"median\", got '" + s + "'");
                     }
                   } else if (v.is_number()) {
                     c.train.kernel.sigma = v.get<double>();
                   } else {
                     fail(ErrorKind::Config, "kernel.sigma must be a number or \"median\"");
                   }
                 }});
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline void validate_run_config(const RunConfig& c) {
  validate_spec(c.synth);
  validate_train_config(c.train);
  validate_detect_config(c.detect);
  if (c.model.attention_hidden < 1 || c.model.heads < 1 || c.model.classifier_hidden < 1)
    fail(ErrorKind::Config, "model widths must be >= 1");
}

/// Nested JSON ({"train": {"alpha": ...}}) with one level per dot.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    j[k.name.substr(0, dot)][k.name.substr(dot + 1)] = k.get(c);
  }
  return j;
}

/// Applies a nested config document on top of `base`. Unknown keys are errors.
inline RunConfig apply_config_json(RunConfig base, const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "config document must be a JSON object");
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) fail(ErrorKind::Config, "config section '" + section + "' must be an object");
    for (const auto& [name, value] : body.items()) {
      const std::string full = section + "." + name;
      const ConfigKey* key = find_key(full);
      if (key == nullptr) fail(ErrorKind::Config, "unknown config key '" + full + "'");
      key->set(base, value);
    }
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "config file is not valid JSON: " + std::string(e.what()));
  }
  return apply_config_json(std::move(base), j);
}

/// Parses a flag value given as text into the key's JSON type.
inline nlohmann::json parse_flag_value(const ConfigKey& key, const std::string& text) {
  try {
    switch (key.type) {
      case KeyType::Int: {
        std::size_t pos = 0;
        const long long v = std::stoll(text, &pos);
        if (pos != text.size()) break;
        return nlohmann::json(v);
      }
      case KeyType::Real: {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) break;
        return nlohmann::json(v);
      }
      case KeyType::Bool:
        if (text == "true" || text == "1") return nlohmann::json(true);
        if (text == "false" || text == "0") return nlohmann::json(false);
        break;
      case KeyType::String:
        return nlohmann::json(text);
    }
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "bad value '" + text + "' for --" + key.name);
}

}  // namespace tsrnet
