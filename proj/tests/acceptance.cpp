// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "tsrnet/gradcheck.hpp"
#include "tsrnet/pipeline.hpp"

using namespace tsrnet;
namespace fs = std::filesystem;

namespace {

const fs::path kBin = TSRNET_CLI_PATH;
const fs::path kSourceDir = TSRNET_SOURCE_DIR;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI with stdout/stderr sent to `log`; returns the exit status.
int cli(const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = "'" + kBin.string() + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " > '" + log.string() + "' 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

struct Criterion {
  bool pass = false;
  std::string detail;
};

// ------------------------------------------------------------------ 1

Criterion gradient_certification(const fs::path& work) {
  Timer t;
  const int code = cli({"gradcheck", "--seed", "0", "--out", (work / "gradcheck.json").string()}, work / "gradcheck.log");
  const double secs = t.seconds();
  if (code != 0) return {false, "gradcheck exited with " + std::to_string(code)};
  const auto j = nlohmann::json::parse(slurp(work / "gradcheck.json"));
  double worst = 0;
  for (const auto& [name, err] : j["components"].items()) worst = std::max(worst, err.get<double>());
  const bool pass = j["passed"].get<bool>() && worst < 1e-5 && secs < 60.0 && j["components"].size() == 7;
  return {pass, std::to_string(j["components"].size()) + " components, max rel error " + fmt("%.2e", worst) + ", " +
                    fmt("%.1f", secs) + " s over " + std::to_string(j["instances"].get<int>()) + " instances"};
}

// ------------------------------------------------------------------ 2

Criterion regularizer_identities() {
  Rng rng(derive_seed(2, 1));
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 512));
    Vector a(n);
    for (double& v : a) v = rng.normal();
    const double direct = smooth_reg_direct(a);
    const double quad = smooth_reg_quadratic(a);
    worst = std::max(worst, std::abs(direct - quad) / std::max(std::abs(direct), 1e-300));
  }
  double sparsity_dev = 0, grad_norm = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = make_gradcheck_instance(rng);
    const auto s = component_settings("R_sparsity[paper-literal]", SparsityMode::PaperLiteral, g.sigma);
    for (const auto& v : g.batch) {
      const auto out = attend(*v.features, g.model.attention, s.attention);
      for (std::size_t h = 0; h < out.weights.rows(); ++h)
        sparsity_dev = std::max(sparsity_dev, std::abs(sparsity_reg(out.weights.row(h)) - 1.0));
    }
    const auto r = total_loss(g.batch, g.model, s, g.masks, nullptr);
    grad_norm = std::max(grad_norm, l2_norm(flatten(r.grad)));
  }
  const bool pass = worst <= 1e-12 && sparsity_dev <= 1e-9 && grad_norm <= 1e-9;
  return {pass, "quadratic vs direct rel " + fmt("%.1e", worst) + "; paper-literal sparsity |R-1| " + fmt("%.1e", sparsity_dev) +
                    ", grad norm " + fmt("%.1e", grad_norm)};
}

// ------------------------------------------------------------------ 3

Criterion mmd_oracle() {
  Rng rng(derive_seed(3, 1));
  double worst = 0, self = 0, asym = 0, most_negative = 0;
  auto set = [&](std::size_t n, std::size_t d, double off) {
    FeatureSet s(n, Vector(d));
    for (auto& v : s)
      for (double& x : v) x = rng.normal() + off;
    return s;
  };
  for (int t = 0; t < 100; ++t) {
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto a = set(static_cast<std::size_t>(rng.uniform_int(1, 8)), d, 0.0);
    const auto b = set(static_cast<std::size_t>(rng.uniform_int(1, 8)), d, rng.uniform(-1, 1));
    const double sigma = rng.uniform(0.2, 3.0);
    const double v = mmd2(a, b, sigma);
    worst = std::max(worst, std::abs(v - oracle::mmd2_oracle(a, b, sigma)));
    self = std::max({self, std::abs(mmd2(a, a, sigma)), std::abs(mmd2(b, b, sigma))});
    asym = std::max(asym, std::abs(v - mmd2(b, a, sigma)));
    most_negative = std::min(most_negative, v);
  }
  const double single = mmd2({{0.0}}, {{2.0}}, 1.0);
  const double closed = 2.0 - 2.0 * std::exp(-2.0);
  const bool pass = worst <= 1e-12 && self <= 1e-12 && asym <= 1e-12 && most_negative >= -1e-12 &&
                    std::abs(single - closed) <= 1e-12 && std::abs(single - 1.72933) < 1e-5;
  return {pass, "oracle diff " + fmt("%.1e", worst) + ", |mmd(T,T)| " + fmt("%.1e", self) + ", asymmetry " + fmt("%.1e", asym) +
                    ", singleton " + fmt("%.6f", single)};
}

// ------------------------------------------------------------------ 4

Criterion eval_oracle() {
  Rng rng(derive_seed(4, 1));
  int mismatches = 0, compared = 0;
  for (int t = 0; t < 50; ++t) {
    const auto in = oracle::random_instance(rng);
    for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      ++compared;
      if (map_at_iou(in.dets, in.gts, in.classes, {thr}).thresholds[0].map != oracle::oracle_map(in, thr)) ++mismatches;
    }
  }
  const std::vector<GroundTruth> gt{{"v", 0, 0.0, 10.0}};
  const Detection tp{"v", 0, 0.0, 9.0, 0.9}, fp{"v", 0, 20.0, 30.0, 0.5}, fp_high{"v", 0, 20.0, 30.0, 0.95};
  const double tp_first = average_precision({tp, fp}, gt, 0.5);
  const double fp_first = average_precision({fp_high, tp}, gt, 0.5);
  const bool pass = mismatches == 0 && tp_first == 1.0 && fp_first == 0.5;
  return {pass, std::to_string(compared - mismatches) + "/" + std::to_string(compared) + " exact matches on 50 instances; TP-first " +
                    fmt("%.3f", tp_first) + ", FP-first " + fmt("%.3f", fp_first)};
}

// ------------------------------------------------------------------ 5

// Softmax regression on per-frame two-stream features, background as its own class.
double linear_probe(const Dataset& ds, bool both_streams) {
  const std::size_t classes = static_cast<std::size_t>(ds.manifest.num_classes) + 1;
  auto collect = [&](Split sp, std::vector<Vector>& xs, std::vector<std::size_t>& ys) {
    for (std::size_t i : ds.indices(sp)) {
      const auto labels = frame_labels(ds.manifest.videos[i]);
      for (std::size_t f = 0; f < labels.size(); ++f) {
        const auto r = ds.feature(i, Stream::Rgb).frame(f);
        Vector x(r.begin(), r.end());
        if (both_streams) {
          const auto g = ds.feature(i, Stream::Flow).frame(f);
          x.insert(x.end(), g.begin(), g.end());
        }
        x.push_back(1.0);
        xs.push_back(std::move(x));
        ys.push_back(labels[f] < 0 ? classes - 1 : static_cast<std::size_t>(labels[f]));
      }
    }
  };
  std::vector<Vector> xs, xt;
  std::vector<std::size_t> ys, yt;
  collect(Split::Train, xs, ys);
  collect(Split::Test, xt, yt);
  Matrix w(classes, xs.front().size());
  Rng rng(derive_seed(5, 1));
  for (std::size_t step = 0; step < 20 * xs.size(); ++step) {
    const std::size_t i = rng.index(xs.size());
    Vector p = stable_softmax(matvec(w, xs[i]));
    p[ys[i]] -= 1.0;
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t j = 0; j < w.cols(); ++j) w(c, j) -= 0.01 * p[c] * xs[i][j];
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < xt.size(); ++i) hit += static_cast<std::size_t>(argmax(matvec(w, xt[i]))) == yt[i];
  return static_cast<double>(hit) / static_cast<double>(xt.size());
}

// synth, source training, target training, detection, evaluation
int pipeline(const fs::path& dir, const fs::path& config) {
  fs::create_directories(dir);
  const std::string c = config.string();
  const std::vector<std::vector<std::string>> steps = {
      {"synth", "--config", c, "--out", (dir / "data").string()},
      {"train", "--role", "source", "--config", c, "--data", (dir / "data").string(), "--out", (dir / "source").string()},
      {"train", "--role", "target", "--config", c, "--data", (dir / "data").string(), "--source", (dir / "source").string(), "--out",
       (dir / "target").string()},
      {"detect", "--config", c, "--ckpt-rgb", (dir / "target/rgb.ckpt").string(), "--ckpt-flow", (dir / "target/flow.ckpt").string(),
       "--data", (dir / "data").string(), "--out", (dir / "detections.json").string()},
      {"eval", "--config", c, "--detections", (dir / "detections.json").string(), "--data", (dir / "data").string(), "--out",
       (dir / "report.json").string()}};
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const int code = cli(steps[k], dir / ("step" + std::to_string(k) + ".log"));
    if (code != 0) return code;
  }
  return 0;
}

Criterion end_to_end(const fs::path& work) {
  const fs::path config = kSourceDir / "configs" / "default.json";
  const Dataset ds = generate_synthetic(load_config(config).synth);
  const double probe = linear_probe(ds, true);
  const double probe_rgb = linear_probe(ds, false);
  Timer t;
  const int code = pipeline(work / "e2e_a", config);
  const double secs = t.seconds();
  if (code != 0) return {false, "pipeline failed with exit " + std::to_string(code)};
  const auto rep = nlohmann::json::parse(slurp(work / "e2e_a" / "report.json"));
  double map05 = -1;
  for (const auto& th : rep["thresholds"])
    if (std::abs(th["iou"].get<double>() - 0.5) < 1e-9) map05 = th["mAP"].get<double>();
  const double acc = rep["accuracy"]["fused"].get<double>();
  const bool pass = probe >= 0.99 && acc >= 0.90 && map05 >= 0.50 && secs < 300.0;
  return {pass, "linear probe " + fmt("%.4f", probe) + " (rgb alone " + fmt("%.4f", probe_rgb) + "); fused accuracy " + fmt("%.3f", acc) +
                    ", mAP@0.5 " + fmt("%.3f", map05) + ", average mAP " + fmt("%.3f", rep["average_mAP_over_grid"].get<double>()) +
                    ", " + fmt("%.1f", secs) + " s"};
}

// ------------------------------------------------------------------ 6, 7

struct ArmSummary {
  double acc = 0, map05 = 0;
};

std::map<std::string, ArmSummary> ablation_summary(const fs::path& dir) {
  std::map<std::string, ArmSummary> out;
  for (const auto& e : nlohmann::json::parse(slurp(dir / "ablation_summary.json")))
    out[e["arm"].get<std::string>()] = {e["median_accuracy_fused"].get<double>(), e["median_mAP@0.5"].get<double>()};
  return out;
}

int run_ablate(const fs::path& dir) {
  return cli({"ablate", "--config", (kSourceDir / "configs" / "transfer_trend.json").string(), "--seeds", "0,1,2,3,4", "--threads",
              "1", "--out", dir.string()},
             dir.string() + ".log");
}

// ------------------------------------------------------------------ 8

// Relative path -> bytes for every regular file under `dir`, log files skipped.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() != ".log") out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "tsrnet_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  int failed = 0;
  auto report = [&](int id, const std::string& name, const Criterion& c) {
    std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << c.detail << std::endl;
    failed += c.pass ? 0 : 1;
  };
  auto guarded = [&](const std::function<Criterion()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Criterion{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient certification", guarded([&] { return gradient_certification(work); }));
  report(2, "regularizer identities", guarded(regularizer_identities));
  report(3, "MMD oracle", guarded(mmd_oracle));
  report(4, "evaluation oracle", guarded(eval_oracle));
  report(5, "end-to-end benchmark", guarded([&] { return end_to_end(work); }));

  const fs::path ab = work / "ablate_a";
  const int ab_code = run_ablate(ab);
  report(6, "transfer trend", guarded([&] {
           if (ab_code != 0) return Criterion{false, "ablate exited with " + std::to_string(ab_code)};
           auto s = ablation_summary(ab);
           const bool kt = s["two_stream+SA+KT"].acc >= s["two_stream+SA"].acc && s["two_stream+KT"].acc >= s["two_stream"].acc;
           const bool fc2 = s["two_stream+SA+KT"].map05 >= s["two_stream+SA+KT_noFC2"].map05;
           return Criterion{kt && fc2, "median accuracy with/without KT: SA arms " + fmt("%.3f", s["two_stream+SA+KT"].acc) + " vs " +
                                           fmt("%.3f", s["two_stream+SA"].acc) + ", mean-pooling arms " + fmt("%.3f", s["two_stream+KT"].acc) +
                                           " vs " + fmt("%.3f", s["two_stream"].acc) + "; median mAP@0.5 FC1+FC2 " +
                                           fmt("%.3f", s["two_stream+SA+KT"].map05) + " vs FC1 only " +
                                           fmt("%.3f", s["two_stream+SA+KT_noFC2"].map05)};
         }));
  report(7, "ablation shape", guarded([&] {
           if (ab_code != 0) return Criterion{false, "ablate exited with " + std::to_string(ab_code)};
           const std::string csv = slurp(ab / "ablation.csv");
           bool arms = true;
           for (const auto& arm : ablation_arms()) arms = arms && csv.find("\n" + arm.name + ",median,") != std::string::npos;
           auto s = ablation_summary(ab);
           const double full = s["two_stream+SA+KT"].map05, sa = s["two_stream+SA"].map05, base = s["two_stream"].map05;
           return Criterion{arms && full >= sa && sa >= base, "median mAP@0.5 +SA+KT " + fmt("%.3f", full) + " >= +SA " + fmt("%.3f", sa) +
                                                                  " >= baseline " + fmt("%.3f", base) + " (+KT " +
                                                                  fmt("%.3f", s["two_stream+KT"].map05) + ")"};
         }));
  report(8, "determinism", guarded([&] {
           const int code = pipeline(work / "e2e_b", kSourceDir / "configs" / "default.json");
           const int ab2 = run_ablate(work / "ablate_b");
           if (code != 0 || ab2 != 0) return Criterion{false, "rerun failed"};
           const auto a = tree(work / "e2e_a"), b = tree(work / "e2e_b");
           const auto c = tree(ab), d = tree(work / "ablate_b");
           int gc = cli({"gradcheck", "--seed", "0", "--out", (work / "gradcheck_b.json").string()}, work / "gradcheck_b.log");
           const bool same = a == b && c == d && gc == 0 && slurp(work / "gradcheck.json") == slurp(work / "gradcheck_b.json");
           return Criterion{same, std::to_string(a.size() + c.size() + 1) + " files compared across reruns of every command" +
                                      std::string(same ? ", all byte-identical" : ", differences found")};
         }));

  fs::remove_all(work);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
