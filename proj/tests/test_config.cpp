#include <set>

#include "test_util.hpp"
#include "tsrnet/config.hpp"

using namespace tsrnet;
using tsrnet::testing::TempDir;

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.train.alpha = 0.25;
  c.train.iterations = 77;
  c.model.attention.sparsity = SparsityMode::Sigmoid;
  c.train.kernel.sigma = 2.5;
  c.thresholds = "0.5,0.75";
  c.synth.seed = 12345678901234ull;
  const auto j = config_to_json(c);
  const RunConfig back = apply_config_json({}, j);
  EXPECT_EQ(config_to_json(back), j);
  EXPECT_EQ(back.train.alpha, 0.25);
  EXPECT_EQ(back.synth.seed, 12345678901234ull);
  EXPECT_EQ(*back.train.kernel.sigma, 2.5);
}

TEST(Config, DefaultsDocumentEveryKey) {
  const auto j = config_to_json({});
  std::size_t n = 0;
  for (const auto& [section, body] : j.items()) n += body.size();
  EXPECT_EQ(n, config_keys().size());
  EXPECT_EQ(j["train"]["batch_size"], 16);
  EXPECT_EQ(j["train"]["momentum"], 0.9);
  EXPECT_EQ(j["train"]["lr_rgb"], 1e-4);
  EXPECT_EQ(j["train"]["lr_flow"], 5e-4);
  EXPECT_EQ(j["detect"]["theta"], 0.5);
  EXPECT_EQ(j["detect"]["threshold"], 0.2);
  EXPECT_EQ(j["kernel"]["sigma"], "median");
  std::set<std::string> names;
  for (const auto& k : config_keys()) EXPECT_TRUE(names.insert(k.name).second) << k.name;
}

TEST(Config, UnknownKeysAndWrongTypes) {
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"train", {{"alpha_", 1.0}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"nope", {{"alpha", 1.0}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"train", 3}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"train", {{"iterations", 1.5}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"train", {{"iterations", -3}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"transfer", {{"enabled", "yes"}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"attention", {{"mode", "max"}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, nlohmann::json::array()));
}

TEST(Config, KernelSigma) {
  EXPECT_EQ(*apply_config_json({}, {{"kernel", {{"sigma", 3}}}}).train.kernel.sigma, 3.0);
  EXPECT_EQ(*apply_config_json({}, {{"kernel", {{"sigma", "0.5"}}}}).train.kernel.sigma, 0.5);
  RunConfig c;
  c.train.kernel.sigma = 1.0;
  EXPECT_FALSE(apply_config_json(c, {{"kernel", {{"sigma", "median"}}}}).train.kernel.sigma.has_value());
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"kernel", {{"sigma", "wide"}}}}));
  EXPECT_FAILS_WITH(ErrorKind::Config, apply_config_json({}, {{"kernel", {{"sigma", true}}}}));
}

TEST(Config, FlagValues) {
  EXPECT_EQ(parse_flag_value(*find_key("train.iterations"), "12"), 12);
  EXPECT_EQ(parse_flag_value(*find_key("train.alpha"), "0.5"), 0.5);
  EXPECT_EQ(parse_flag_value(*find_key("transfer.enabled"), "false"), false);
  EXPECT_EQ(parse_flag_value(*find_key("attention.mode"), "uniform"), "uniform");
  EXPECT_FAILS_WITH(ErrorKind::Config, parse_flag_value(*find_key("train.iterations"), "12x"));
  EXPECT_FAILS_WITH(ErrorKind::Config, parse_flag_value(*find_key("train.alpha"), ""));
  EXPECT_FAILS_WITH(ErrorKind::Config, parse_flag_value(*find_key("transfer.enabled"), "maybe"));
  EXPECT_EQ(find_key("train.nothing"), nullptr);
}

TEST(Config, FileLoading) {
  const TempDir dir;
  detail::write_text(dir / "c.json", R"({"train": {"seed": 9}, "detect": {"theta": 0.25}})");
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.detect.theta, 0.25);
  detail::write_text(dir / "bad.json", "{not json");
  EXPECT_FAILS_WITH(ErrorKind::Config, load_config(dir / "bad.json"));
  EXPECT_FAILS_WITH(ErrorKind::Io, load_config(dir / "missing.json"));
}

TEST(Config, Validation) {
  RunConfig c;
  validate_run_config(c);
  c.model.heads = 0;
  EXPECT_FAILS_WITH(ErrorKind::Config, validate_run_config(c));
  c = {};
  c.detect.theta = -0.1;
  EXPECT_FAILS_WITH(ErrorKind::Config, validate_run_config(c));
}
