#pragma once

#include <algorithm>
#include <array>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tsrnet/config.hpp"
#include "tsrnet/dataset.hpp"
#include "tsrnet/detection.hpp"
#include "tsrnet/eval.hpp"
#include "tsrnet/training.hpp"

namespace tsrnet {

inline std::vector<Detection> flatten_detections(const std::vector<VideoDetection>& vids) {
  std::vector<Detection> out;
  for (const auto& v : vids)
    for (const auto& p : v.proposals) out.push_back({v.video_id, p.label, p.t_start, p.t_end, p.confidence});
  return out;
}

inline std::vector<GroundTruth> ground_truth(const Dataset& ds, Split split) {
  std::vector<GroundTruth> out;
  for (std::size_t i : ds.indices(split)) {
    const auto& v = ds.manifest.videos[i];
    for (const auto& s : v.segments) out.push_back({v.id, s.label, s.t_start, s.t_end});
  }
  return out;
}

/// Detection list as written to detections.json: [{video_id, class, t_start, t_end, confidence}].
inline nlohmann::json detections_to_json(const std::vector<Detection>& dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets)
    arr.push_back({{"video_id", d.video_id},
                   {"class", d.label},
                   {"t_start", d.t_start},
                   {"t_end", d.t_end},
                   {"confidence", d.confidence}});
  return arr;
}

inline std::vector<Detection> detections_from_json(const nlohmann::json& j) {
  std::vector<Detection> out;
  try {
    for (const auto& e : j)
      out.push_back({e.at("video_id").get<std::string>(), e.at("class").get<int>(), e.at("t_start").get<double>(),
                     e.at("t_end").get<double>(), e.at("confidence").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed detections file: ") + e.what());
  }
  return out;
}

/// Video-level predictions written next to the detections so `eval` can score
/// classification: [{video_id, logits_rgb, logits_flow, probs_fused}].
inline nlohmann::json predictions_to_json(const std::vector<VideoDetection>& vids) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : vids)
    arr.push_back({{"video_id", v.video_id},
                   {"logits_rgb", v.logits_rgb},
                   {"logits_flow", v.logits_flow},
                   {"probs_fused", v.probs_fused}});
  return arr;
}

struct VideoPrediction {
  std::string video_id;
  Vector logits_rgb, logits_flow, probs_fused;
};

inline std::vector<VideoPrediction> predictions_from_json(const nlohmann::json& j) {
  std::vector<VideoPrediction> out;
  try {
    for (const auto& e : j)
      out.push_back({e.at("video_id").get<std::string>(), e.at("logits_rgb").get<Vector>(), e.at("logits_flow").get<Vector>(),
                     e.at("probs_fused").get<Vector>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed predictions file: ") + e.what());
  }
  return out;
}

inline std::vector<VideoPrediction> to_predictions(const std::vector<VideoDetection>& vids) {
  std::vector<VideoPrediction> out;
  for (const auto& v : vids) out.push_back({v.video_id, v.logits_rgb, v.logits_flow, v.probs_fused});
  return out;
}

/// mAP over the split's ground truth, plus per-stream and fused accuracy when
/// predictions are supplied.
inline EvalReport evaluate(const Dataset& ds, Split split, const std::vector<Detection>& dets,
                           const std::vector<VideoPrediction>* preds, const std::vector<double>& thresholds) {
  EvalReport rep = map_at_iou(dets, ground_truth(ds, split), ds.manifest.num_classes, thresholds);
  if (preds != nullptr) {
    std::map<std::string, const VideoPrediction*> by_id;
    for (const auto& p : *preds) by_id[p.video_id] = &p;
    std::vector<int> pr, pf, pu;
    std::vector<std::vector<int>> truth;
    for (std::size_t i : ds.indices(split)) {
      const auto& v = ds.manifest.videos[i];
      const auto it = by_id.find(v.id);
      if (it == by_id.end()) fail(ErrorKind::Input, "missing prediction for video " + v.id);
      pr.push_back(argmax(it->second->logits_rgb));
      pf.push_back(argmax(it->second->logits_flow));
      pu.push_back(argmax(it->second->probs_fused));
      truth.push_back(v.labels);
    }
    rep.accuracy_rgb = accuracy(pr, truth);
    rep.accuracy_flow = accuracy(pf, truth);
    rep.accuracy_fused = accuracy(pu, truth);
  }
  return rep;
}

inline std::array<AttentionSettings, 2> both(AttentionSettings s) { return {s, s}; }

/// The comparison arms: baseline (mean pooling), +SA (learned attention with
/// regularizers), +KT (mean pooling with transfer), +SA+KT, and +SA+KT without the
/// post-FC1 term.
struct AblationArm {
  std::string name;
  bool attention = false;
  bool transfer = false;
  bool fc2 = true;
};

inline std::vector<AblationArm> ablation_arms() {
  return {{"two_stream", false, false, true},
          {"two_stream+SA", true, false, true},
          {"two_stream+KT", false, true, true},
          {"two_stream+SA+KT", true, true, true},
          {"two_stream+SA+KT_noFC2", true, true, false}};
}

struct AblationResult {
  std::string arm;
  std::uint64_t seed = 0;
  EvalReport report;
};

inline RunConfig arm_config(const RunConfig& base, const AblationArm& arm, std::uint64_t seed) {
  RunConfig c = base;
  c.train.seed = seed;
  c.model.attention.mode = arm.attention ? AttentionMode::Learned : AttentionMode::Uniform;
  if (!arm.attention) c.train.alpha = c.train.beta = 0.0;
  c.train.transfer_enabled = arm.transfer;
  c.train.fc2_enabled = arm.fc2;
  return c;
}

/// Source training with L_class only (no regularizers).
inline TrainOutput run_source_training(const Dataset& ds, const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.alpha = t.beta = 0.0;
  t.transfer_enabled = false;
  t.label_fraction = 1.0;
  return train_source(ds, t, cfg.model);
}

inline EvalReport train_and_evaluate(const Dataset& ds, const RunConfig& cfg, const std::array<StreamModel, 2>* source) {
  const TrainOutput target = train_target(ds, source, cfg.train, cfg.model, cfg.model.attention);
  const auto vids = detect_split(ds, Split::Test, target.models, both(cfg.model.attention), cfg.detect);
  const auto preds = to_predictions(vids);
  return evaluate(ds, Split::Test, flatten_detections(vids), &preds, parse_thresholds(cfg.thresholds));
}

/// Runs every arm for every seed. Each (seed, attention-mode) pair trains its own
/// source network; jobs are independent, so running them on several threads
/// does not change any result.
inline std::vector<AblationResult> run_ablation(const Dataset& ds, const RunConfig& base,
                                                const std::vector<std::uint64_t>& seeds, unsigned threads = 0) {
  const auto arms = ablation_arms();
  struct Job {
    std::size_t seed_idx;
    std::size_t arm_idx;
  };
  std::vector<std::array<TrainOutput, 2>> sources(seeds.size());  // [uniform, learned]
  {
    std::vector<std::pair<std::size_t, int>> src_jobs;
    for (std::size_t s = 0; s < seeds.size(); ++s)
      for (int mode = 0; mode < 2; ++mode) src_jobs.push_back({s, mode});
    auto run_src = [&](std::size_t j) {
      const auto [s, mode] = src_jobs[j];
      AblationArm arm{"", mode == 1, false, true};
      sources[s][static_cast<std::size_t>(mode)] = run_source_training(ds, arm_config(base, arm, seeds[s]));
    };
    const unsigned hw = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(hw, src_jobs.size()); ++t)
      pool.emplace_back([&] {
        for (std::size_t j; (j = next++) < src_jobs.size();) run_src(j);
      });
    for (auto& th : pool) th.join();
  }
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < seeds.size(); ++s)
    for (std::size_t a = 0; a < arms.size(); ++a) jobs.push_back({s, a});
  std::vector<AblationResult> results(jobs.size());
  auto run_job = [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& arm = arms[job.arm_idx];
    const RunConfig c = arm_config(base, arm, seeds[job.seed_idx]);
    const auto& src = sources[job.seed_idx][arm.attention ? 1 : 0].models;
    results[j] = {arm.name, seeds[job.seed_idx], train_and_evaluate(ds, c, arm.transfer ? &src : nullptr)};
  };
  const unsigned hw = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(hw, jobs.size()); ++t)
    pool.emplace_back([&] {
      for (std::size_t j; (j = next++) < jobs.size();) run_job(j);
    });
  for (auto& th : pool) th.join();
  return results;
}

/// Median over seeds of a metric, per arm, in arm order.
inline std::vector<std::pair<std::string, double>> median_by_arm(const std::vector<AblationResult>& rows,
                                                                 const std::function<double(const EvalReport&)>& metric) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& arm : ablation_arms()) {
    std::vector<double> vals;
    for (const auto& r : rows)
      if (r.arm == arm.name) vals.push_back(metric(r.report));
    if (!vals.empty()) out.push_back({arm.name, median_of(vals)});
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationResult>& rows) {
  if (rows.empty()) return "arm,seed,acc_rgb,acc_flow,acc_fused\n";
  std::string out = "arm,seed,acc_rgb,acc_flow,acc_fused";
  char buf[64];
  for (const auto& t : rows.front().report.thresholds) {
    std::snprintf(buf, sizeof buf, ",mAP@%.2f", t.iou);
    out += buf;
  }
  out += ",mAP_avg\n";
  auto row = [&](const std::string& arm, const std::string& seed, const EvalReport& r) {
    out += arm + "," + seed + "," + format_double(r.accuracy_rgb.value_or(0.0)) + "," +
           format_double(r.accuracy_flow.value_or(0.0)) + "," + format_double(r.accuracy_fused.value_or(0.0));
    for (const auto& t : r.thresholds) out += "," + format_double(t.map);
    out += "," + format_double(r.average_map) + "\n";
  };
  for (const auto& r : rows) row(r.arm, std::to_string(r.seed), r.report);
  // median rows: each column's median over seeds
  for (const auto& arm : ablation_arms()) {
    std::vector<const EvalReport*> reps;
    for (const auto& r : rows)
      if (r.arm == arm.name) reps.push_back(&r.report);
    if (reps.empty()) continue;
    EvalReport med = *reps.front();
    auto med_of = [&](auto getter) {
      std::vector<double> v;
      for (const auto* r : reps) v.push_back(getter(*r));
      return median_of(v);
    };
    med.accuracy_rgb = med_of([](const EvalReport& r) { return r.accuracy_rgb.value_or(0.0); });
    med.accuracy_flow = med_of([](const EvalReport& r) { return r.accuracy_flow.value_or(0.0); });
    med.accuracy_fused = med_of([](const EvalReport& r) { return r.accuracy_fused.value_or(0.0); });
    for (std::size_t t = 0; t < med.thresholds.size(); ++t)
      med.thresholds[t].map = med_of([t](const EvalReport& r) { return r.thresholds[t].map; });
    med.average_map = med_of([](const EvalReport& r) { return r.average_map; });
    row(arm.name, "median", med);
  }
  return out;
}

}  // namespace tsrnet
