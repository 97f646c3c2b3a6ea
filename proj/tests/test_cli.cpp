#include <cstdlib>
#include <sstream>

#include "test_util.hpp"
#include "tsrnet/cli.hpp"

using namespace tsrnet;
using tsrnet::testing::TempDir;
using tsrnet::testing::file_bytes;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream os, err;
  const int code = cli::run(args, os, err);
  return {code, os.str(), err.str()};
}

// Small dataset and short training, enough to exercise every command.
const std::vector<std::string> kSmall = {"--synth.classes", "3", "--synth.dim", "6", "--synth.source_per_class", "8",
                                         "--synth.target_train", "12", "--synth.target_test", "6", "--synth.frames_min",
                                         "30", "--synth.frames_max", "50"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void pipeline(const fs::path& root) {
  const std::vector<std::string> iters = {"--train.iterations", "150", "--train.lr_rgb", "0.001", "--train.lr_flow", "0.001"};
  ASSERT_EQ(run(cat({"synth", "--out", (root / "data").string()}, kSmall)).code, 0);
  ASSERT_EQ(run(cat({"train", "--role", "source", "--data", (root / "data").string(), "--out", (root / "src").string()}, iters)).code, 0);
  ASSERT_EQ(run(cat({"train", "--role", "target", "--data", (root / "data").string(), "--source", (root / "src").string(), "--out",
                     (root / "tgt").string()},
                    iters))
                .code,
            0);
  ASSERT_EQ(run({"detect", "--ckpt-rgb", (root / "tgt/rgb.ckpt").string(), "--ckpt-flow", (root / "tgt/flow.ckpt").string(), "--data",
                 (root / "data").string(), "--out", (root / "detections.json").string()})
                .code,
            0);
  ASSERT_EQ(run({"eval", "--detections", (root / "detections.json").string(), "--data", (root / "data").string(), "--thresholds",
                 "0.1:0.9:0.1", "--out", (root / "report.json").string()})
                .code,
            0);
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train", "--role", "source"}).code, 2);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = TSRNET_CLI_PATH;
  EXPECT_EQ(std::system((bin + " frobnicate > /dev/null 2>&1").c_str()) >> 8, 2);
  EXPECT_EQ(std::system((bin + " --help > /dev/null 2>&1").c_str()) >> 8, 0);
  EXPECT_EQ(std::system((bin + " gradcheck --seed 0 --instances 5 > /dev/null 2>&1").c_str()) >> 8, 0);
}

TEST(Cli, GradcheckSeedZero) {
  const TempDir dir;
  const auto r = run({"gradcheck", "--seed", "0", "--out", (dir / "gc.json").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  for (const auto& n : gradcheck_component_names()) EXPECT_NE(r.out.find(n), std::string::npos) << n;
  const auto j = nlohmann::json::parse(file_bytes(dir / "gc.json"));
  EXPECT_EQ(j["instances"], 200);
}

TEST(Cli, HelpListsEveryConfigKeyOnEverySubcommand) {
  for (const std::string sub : {"synth", "train", "detect", "eval", "ablate"}) {
    const auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0);
    for (const auto& k : config_keys()) EXPECT_NE(r.out.find("--" + k.name + " "), std::string::npos) << sub << " " << k.name;
    EXPECT_NE(r.out.find("--config"), std::string::npos);
  }
  const auto g = run({"gradcheck", "--help"});
  for (const std::string f : {"--seed", "--instances", "--out"}) EXPECT_NE(g.out.find(f), std::string::npos);
}

TEST(Cli, RuntimeErrorIsJsonAndRollsBack) {
  const TempDir dir;
  const auto r = run({"train", "--role", "source", "--data", (dir / "missing").string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.err.substr(r.err.find('{')));
  EXPECT_EQ(j["error"], "io_error");
  EXPECT_TRUE(j.contains("message"));
  EXPECT_FALSE(fs::exists(dir / "run"));

  const auto bad = run(cat({"synth", "--out", (dir / "d").string(), "--synth.frames_min", "100", "--synth.frames_max", "10"}, {}));
  EXPECT_EQ(bad.code, 1);
  EXPECT_FALSE(fs::exists(dir / "d"));
  const auto key = run({"synth", "--out", (dir / "d").string(), "--train.alpha", "abc"});
  EXPECT_EQ(key.code, 1);
  EXPECT_NE(key.err.find("config_error"), std::string::npos);
}

TEST(Cli, TargetTrainingNeedsSource) {
  const TempDir dir;
  ASSERT_EQ(run(cat({"synth", "--out", (dir / "data").string()}, kSmall)).code, 0);
  const auto r = run({"train", "--role", "target", "--data", (dir / "data").string(), "--out", (dir / "t").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("config_error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "t"));
  EXPECT_EQ(run({"synth", "--out", (dir / "data").string()}).code, 1);
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.json"));
}

TEST(Cli, PipelineSmokeAndByteIdenticalReruns) {
  const TempDir a, b_owner;
  const fs::path b = b_owner.path() / "second";
  fs::create_directories(b);
  pipeline(a.path());
  pipeline(b);
  for (const std::string f : {"src/rgb.ckpt", "tgt/flow.ckpt", "tgt/loss_rgb.csv", "detections.json", "detections.predictions.json",
                              "report.json", "report.csv", "report.svg", "data/manifest.json"})
    EXPECT_EQ(file_bytes(a / f), file_bytes(b / f)) << f;
  const auto rep = nlohmann::json::parse(file_bytes(a / "report.json"));
  ASSERT_EQ(rep["thresholds"].size(), 9u);
  for (const auto& t : rep["thresholds"]) EXPECT_TRUE(t["mAP"].is_number());
  EXPECT_TRUE(rep["accuracy"]["fused"].is_number());
  EXPECT_EQ(file_bytes(a / "tgt/loss_rgb.csv").rfind("iter,L,L_class,R_smooth,R_sparsity,L_FC1,L_FC2\n", 0), 0u);
  const auto resolved = nlohmann::json::parse(file_bytes(a / "tgt/resolved_config.json"));
  EXPECT_EQ(resolved["train"]["iterations"], 150);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const TempDir dir;
  detail::write_text(dir / "c.json", R"({"synth": {"classes": 2, "dim": 3, "source_per_class": 2, "target_train": 2, "target_test": 2}})");
  ASSERT_EQ(run({"synth", "--config", (dir / "c.json").string(), "--synth.dim", "5", "--out", (dir / "d").string()}).code, 0);
  const auto j = nlohmann::json::parse(file_bytes(dir / "d" / "resolved_config.json"));
  EXPECT_EQ(j["synth"]["classes"], 2);
  EXPECT_EQ(j["synth"]["dim"], 5);
  detail::write_text(dir / "bad.json", R"({"synth": {"colour": 1}})");
  EXPECT_EQ(run({"synth", "--config", (dir / "bad.json").string(), "--out", (dir / "e").string()}).code, 1);
}

TEST(Cli, AblateWritesComparisonCsv) {
  const TempDir dir;
  const auto args = cat({"ablate", "--seeds", "0,1", "--out", (dir / "ab").string(), "--train.iterations", "20"}, kSmall);
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = file_bytes(dir / "ab" / "ablation.csv");
  EXPECT_EQ(csv.rfind("arm,seed,acc_rgb,acc_flow,acc_fused,mAP@0.10", 0), 0u);
  for (const auto& arm : ablation_arms()) {
    EXPECT_NE(csv.find("\n" + arm.name + ",0,"), std::string::npos) << arm.name;
    EXPECT_NE(csv.find("\n" + arm.name + ",median,"), std::string::npos) << arm.name;
  }
  const auto again = run(cat({"ablate", "--seeds", "0,1", "--threads", "2", "--out", (dir / "ab2").string(), "--train.iterations", "20"}, kSmall));
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(file_bytes(dir / "ab2" / "ablation.csv"), csv);
  EXPECT_EQ(run({"ablate", "--seeds", "0,x", "--out", (dir / "ab3").string()}).code, 1);
}
