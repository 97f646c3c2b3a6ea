#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsrnet/config.hpp"
#include "tsrnet/gradcheck.hpp"
#include "tsrnet/pipeline.hpp"

namespace tsrnet::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kRgbCheckpoint = "rgb.ckpt";
inline constexpr const char* kFlowCheckpoint = "flow.ckpt";
inline constexpr const char* kResolvedConfig = "resolved_config.json";

/// Files and directories written by a command, removed again if it fails.
class Outputs {
 public:
  void file(const fs::path& p) { files_.push_back(p); }
  void dir(const fs::path& p) {
    if (!fs::exists(p)) {
      fs::create_directories(p);
      dirs_.push_back(p);
    }
  }
  void rollback() noexcept {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove_all(*it, ec);
  }

 private:
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
};

/// Config flags of one subcommand: `--config` plus one flag per config key.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON config file; flags override its values");
    for (const auto& k : config_keys()) {
      auto* opt = app.add_option("--" + k.name, values[k.name], k.help);
      opt->group("Config keys");
    }
  }

  RunConfig resolve(CLI::App& app) const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    for (const auto& k : config_keys())
      if (app.count("--" + k.name) > 0) k.set(cfg, parse_flag_value(k, values.at(k.name)));
    validate_run_config(cfg);
    return cfg;
  }
};

inline void log_config(const RunConfig& cfg, const fs::path& path, Outputs& outs, std::ostream& err) {
  const std::string text = config_to_json(cfg).dump(2) + "\n";
  err << "resolved config:\n" << text;
  outs.file(path);
  detail::write_text(path, text);
}

inline fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  return fs::path(p.string() + suffix);
}

inline void ensure_parent(const fs::path& p, Outputs& outs) {
  if (p.has_parent_path()) outs.dir(p.parent_path());
}

inline void write_out(const fs::path& p, const std::string& text, Outputs& outs) {
  outs.file(p);
  detail::write_text(p, text);
}

inline void save_ck(const ModelCheckpoint& ck, const fs::path& p, Outputs& outs) {
  outs.file(p);
  save_checkpoint(ck, p);
}

// ---------------------------------------------------------------- commands

inline void cmd_synth(const RunConfig& cfg, const fs::path& out, Outputs& outs, std::ostream& os, std::ostream& err) {
  outs.dir(out);
  if (fs::exists(out / kManifestName)) fail(ErrorKind::Io, "refusing to overwrite existing dataset in " + out.string());
  log_config(cfg, out / kResolvedConfig, outs, err);
  const Dataset ds = generate_synthetic(cfg.synth);
  for (const auto& v : ds.manifest.videos)
    for (Stream s : kStreams) outs.file(out / v.feature_path(s));
  outs.file(out / kManifestName);
  save_dataset(ds, out);
  os << "wrote " << ds.manifest.videos.size() << " videos to " << out.string() << "\n";
}

inline void cmd_train(const RunConfig& cfg, Role role, const fs::path& data, const fs::path& out,
                      const std::optional<fs::path>& source_dir, Outputs& outs, std::ostream& os, std::ostream& err) {
  const Dataset ds = load_dataset(data);
  outs.dir(out);
  log_config(cfg, out / kResolvedConfig, outs, err);
  TrainOutput result;
  AttentionSettings source_attention = cfg.model.attention;
  if (role == Role::Source) {
    result = run_source_training(ds, cfg);
  } else {
    std::optional<std::array<StreamModel, 2>> source;
    if (cfg.train.transfer_enabled) {
      if (!source_dir) fail(ErrorKind::Config, "train --role target with transfer.enabled needs --source <dir>");
      const auto rgb = load_checkpoint(*source_dir / kRgbCheckpoint);
      const auto flow = load_checkpoint(*source_dir / kFlowCheckpoint);
      if (rgb.stream != Stream::Rgb || flow.stream != Stream::Flow)
        fail(ErrorKind::Config, "source checkpoints are not an rgb/flow pair");
      source = std::array<StreamModel, 2>{rgb.model, flow.model};
      source_attention = rgb.model_config.attention;
    }
    result = train_target(ds, source ? &*source : nullptr, cfg.train, cfg.model, source_attention);
  }
  const nlohmann::json cfg_json = config_to_json(cfg);
  for (Stream s : kStreams) {
    const int si = static_cast<int>(s);
    ModelCheckpoint ck{result.models[si], cfg.model, s, role, cfg.train.iterations, cfg_json};
    save_ck(ck, out / (s == Stream::Rgb ? kRgbCheckpoint : kFlowCheckpoint), outs);
    write_out(out / ("loss_" + stream_name(s) + ".csv"), loss_curve_csv(result.curves[si]), outs);
    const auto& c = result.curves[si];
    if (!c.empty())
      os << stream_name(s) << ": L " << format_double(c.front().terms.total) << " -> " << format_double(c.back().terms.total)
         << "\n";
  }
}

inline void cmd_detect(RunConfig cfg, const fs::path& ck_rgb, const fs::path& ck_flow, const fs::path& data,
                       Split split, const fs::path& out, Outputs& outs, std::ostream& os, std::ostream& err) {
  const Dataset ds = load_dataset(data);
  const auto rgb = load_checkpoint(ck_rgb);
  const auto flow = load_checkpoint(ck_flow);
  if (rgb.stream != Stream::Rgb) fail(ErrorKind::Config, ck_rgb.string() + " is not an rgb checkpoint");
  if (flow.stream != Stream::Flow) fail(ErrorKind::Config, ck_flow.string() + " is not a flow checkpoint");
  cfg.model = rgb.model_config;
  ensure_parent(out, outs);
  log_config(cfg, sibling(out, ".config.json"), outs, err);
  const auto vids = detect_split(ds, split, {rgb.model, flow.model}, {rgb.model_config.attention, flow.model_config.attention},
                                 cfg.detect);
  const auto dets = flatten_detections(vids);
  write_out(out, detections_to_json(dets).dump(2) + "\n", outs);
  write_out(sibling(out, ".predictions.json"), predictions_to_json(vids).dump(2) + "\n", outs);
  os << "wrote " << dets.size() << " detections for " << vids.size() << " videos\n";
}

inline void cmd_eval(const RunConfig& cfg, const fs::path& det_path, std::optional<fs::path> pred_path, const fs::path& data,
                     Split split, const fs::path& out, Outputs& outs, std::ostream& os, std::ostream& err) {
  const Dataset ds = load_dataset(data);
  nlohmann::json dj;
  try {
    dj = nlohmann::json::parse(detail::read_text(det_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("detections file is not valid JSON: ") + e.what());
  }
  const auto dets = detections_from_json(dj);
  if (!pred_path) {
    const auto guess = sibling(det_path, ".predictions.json");
    if (fs::exists(guess)) pred_path = guess;
  }
  std::optional<std::vector<VideoPrediction>> preds;
  if (pred_path) {
    try {
      preds = predictions_from_json(nlohmann::json::parse(detail::read_text(*pred_path)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, std::string("predictions file is not valid JSON: ") + e.what());
    }
  }
  const auto thresholds = parse_thresholds(cfg.thresholds);
  ensure_parent(out, outs);
  log_config(cfg, sibling(out, ".config.json"), outs, err);
  const EvalReport rep = evaluate(ds, split, dets, preds ? &*preds : nullptr, thresholds);
  write_out(out, report_to_json(rep, ds.manifest.class_names).dump(2) + "\n", outs);
  write_out(sibling(out, ".csv"), report_to_csv(rep), outs);
  write_out(sibling(out, ".svg"), report_to_svg(rep), outs);
  os << report_to_csv(rep);
  if (rep.accuracy_fused) os << "accuracy_fused," << format_double(*rep.accuracy_fused) << "\n";
}

inline int cmd_gradcheck(std::uint64_t seed, std::size_t instances, const std::optional<fs::path>& out, Outputs& outs,
                         std::ostream& os) {
  const GradcheckReport rep = run_gradcheck(seed, instances);
  nlohmann::json j = {{"seed", seed}, {"instances", rep.instances}, {"tolerance", 1e-5}, {"passed", rep.passed()}};
  char line[128];
  for (const auto& c : rep.components) {
    std::snprintf(line, sizeof line, "%-28s max_rel_error %.3e  (%zu coordinates)\n", c.name.c_str(), c.max_rel_error,
                  c.coordinates);
    os << line;
    j["components"][c.name] = c.max_rel_error;
  }
  std::snprintf(line, sizeof line, "%s in %.2f s over %zu instances\n", rep.passed() ? "PASS" : "FAIL", rep.seconds,
                rep.instances);
  os << line;
  if (out) {
    ensure_parent(*out, outs);
    write_out(*out, j.dump(2) + "\n", outs);
  }
  if (!rep.passed()) fail(ErrorKind::Numeric, "gradient check exceeded tolerance 1e-5");
  return kExitOk;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad seed '" + tok + "' in --seeds");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline void cmd_ablate(const RunConfig& cfg, const std::optional<fs::path>& data, const std::string& seeds_text,
                       unsigned threads, const fs::path& out, Outputs& outs, std::ostream& os, std::ostream& err) {
  const auto seeds = parse_seeds(seeds_text);
  const Dataset ds = data ? load_dataset(*data) : generate_synthetic(cfg.synth);
  outs.dir(out);
  log_config(cfg, out / kResolvedConfig, outs, err);
  const auto rows = run_ablation(ds, cfg, seeds, threads);
  write_out(out / "ablation.csv", ablation_csv(rows), outs);
  nlohmann::json summary = nlohmann::json::array();
  const auto acc = median_by_arm(rows, [](const EvalReport& r) { return r.accuracy_fused.value_or(0.0); });
  bool has_05 = false;
  if (!rows.empty())
    for (const auto& t : rows.front().report.thresholds) has_05 = has_05 || std::abs(t.iou - 0.5) < 1e-9;
  const auto avg = median_by_arm(rows, [](const EvalReport& r) { return r.average_map; });
  std::vector<std::pair<std::string, double>> at05;
  if (has_05) at05 = median_by_arm(rows, [](const EvalReport& r) { return r.map_at(0.5); });
  for (std::size_t k = 0; k < acc.size(); ++k) {
    nlohmann::json e = {{"arm", acc[k].first}, {"median_accuracy_fused", acc[k].second}, {"median_average_mAP", avg[k].second}};
    if (has_05) e["median_mAP@0.5"] = at05[k].second;
    summary.push_back(e);
    os << acc[k].first << ": accuracy " << format_double(acc[k].second);
    if (has_05) os << ", mAP@0.5 " << format_double(at05[k].second);
    os << ", average mAP " << format_double(avg[k].second) << "\n";
  }
  write_out(out / "ablation_summary.json", summary.dump(2) + "\n", outs);
}

// ---------------------------------------------------------------- entry point

inline void print_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

/// Parses argv, runs one subcommand and returns the exit status: 0 on success,
/// 1 on a runtime error (a JSON error object goes to `err`), 2 on bad usage.
inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Weakly-supervised action localization on per-frame features", "tsrnet"};
  app.require_subcommand(1);
  app.fallthrough(false);

  ConfigFlags synth_flags, train_flags, detect_flags, eval_flags, ablate_flags;
  std::string out, data, role = "target", source, ck_rgb, ck_flow, detections, predictions, split = "test", thresholds;
  std::string seeds = "0,1,2,3,4";
  std::uint64_t seed = 0;
  std::size_t instances = 200;
  unsigned threads = 1;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", out, "Dataset directory to create")->required();
  synth_flags.attach(*synth);

  auto* train = app.add_subcommand("train", "Train source or target models for both streams");
  train->add_option("--role", role, "source (trimmed split, classification loss) or target (untrimmed split, full loss)")
      ->check(CLI::IsMember({"source", "target"}));
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Output directory for rgb.ckpt, flow.ckpt and loss curves")->required();
  train->add_option("--source", source, "Directory holding the source rgb.ckpt and flow.ckpt (target role)");
  train_flags.attach(*train);

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences");
  gc->add_option("--seed", seed, "Seed for the random instances");
  gc->add_option("--instances", instances, "Number of random instances");
  gc->add_option("--out", out, "Optional JSON report path");

  auto* detect = app.add_subcommand("detect", "Extract temporal proposals from a dataset split");
  detect->add_option("--ckpt-rgb", ck_rgb, "RGB checkpoint")->required();
  detect->add_option("--ckpt-flow", ck_flow, "Flow checkpoint")->required();
  detect->add_option("--data", data, "Dataset directory")->required();
  detect->add_option("--split", split, "Split to process")->check(CLI::IsMember({"source", "train", "test"}));
  detect->add_option("--out", out, "Detections JSON path; predictions go to <stem>.predictions.json")->required();
  detect_flags.attach(*detect);

  auto* eval = app.add_subcommand("eval", "Score detections by mAP over tIoU thresholds");
  eval->add_option("--detections", detections, "Detections JSON")->required();
  eval->add_option("--predictions", predictions, "Video predictions JSON (default: beside the detections)");
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--split", split, "Split holding the ground truth")->check(CLI::IsMember({"source", "train", "test"}));
  eval->add_option("--thresholds", thresholds, "IoU grid; same as --eval.thresholds");
  eval->add_option("--out", out, "Report JSON path; also writes <stem>.csv and <stem>.svg")->required();
  eval_flags.attach(*eval);

  auto* ablate = app.add_subcommand("ablate", "Compare the ablation arms over several seeds");
  ablate->add_option("--data", data, "Dataset directory (default: generate from the synth.* keys)");
  ablate->add_option("--seeds", seeds, "Comma-separated training seeds");
  ablate->add_option("--threads", threads, "Worker threads (results do not depend on it)");
  ablate->add_option("--out", out, "Output directory")->required();
  ablate_flags.attach(*ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    os << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    os << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  Outputs outs;
  try {
    if (synth->parsed()) {
      cmd_synth(synth_flags.resolve(*synth), out, outs, os, err);
    } else if (train->parsed()) {
      std::optional<fs::path> src;
      if (!source.empty()) src = source;
      cmd_train(train_flags.resolve(*train), parse_role(role), data, out, src, outs, os, err);
    } else if (gc->parsed()) {
      std::optional<fs::path> o;
      if (!out.empty()) o = out;
      cmd_gradcheck(seed, instances, o, outs, os);
    } else if (detect->parsed()) {
      cmd_detect(detect_flags.resolve(*detect), ck_rgb, ck_flow, data, parse_split(split), out, outs, os, err);
    } else if (eval->parsed()) {
      RunConfig cfg = eval_flags.resolve(*eval);
      if (!thresholds.empty()) cfg.thresholds = thresholds;
      std::optional<fs::path> p;
      if (!predictions.empty()) p = predictions;
      cmd_eval(cfg, detections, p, data, parse_split(split), out, outs, os, err);
    } else if (ablate->parsed()) {
      std::optional<fs::path> d;
      if (!data.empty()) d = data;
      cmd_ablate(ablate_flags.resolve(*ablate), d, seeds, threads, out, outs, os, err);
    }
  } catch (const Error& e) {
    outs.rollback();
    print_error(err, std::string(error_kind_name(e.kind())), e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    outs.rollback();
    print_error(err, "internal_error", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"tsrnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), os, err);
}

}  // namespace tsrnet::cli
