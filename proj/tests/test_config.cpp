#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gfomc/config.hpp"

using namespace gfomc;

namespace {

Matrix history(Index n, Index t) {
  Matrix h(n, t);
  for (Index j = 0; j < t; ++j)
    for (Index i = 0; i < n; ++i) h(i, j) = 0.1 * static_cast<double>(i + 1) - 0.3 * static_cast<double>(j);
  return h;
}

}  // namespace

TEST(Expr, LinearTerms) {
  const auto f = parse_function("2*x[1] - 0.5*x[t-1]", 3, 4);
  const Matrix h = history(4, 3);
  EXPECT_TRUE(f.eval(h, 3).isApprox(2.0 * h.col(0) - 0.5 * h.col(2)));
  EXPECT_EQ(f.memory().back(), 2);
}

TEST(Expr, ScalarFunctionsAndConstants) {
  const Matrix h = history(3, 2);
  const Vector t = parse_function("tanh(x[t-1])", 1, 3).eval(h, 1);
  EXPECT_NEAR(t(2), std::tanh(h(2, 0)), 1e-15);
  const Vector s = parse_function("soft[0.15](x[1] + x[2])", 2, 3).eval(h, 2);
  EXPECT_NEAR(s(0), 0.0, 1e-15);  // 0.1 + (-0.2) = -0.1, inside the threshold
  EXPECT_TRUE(parse_function("const[ones]", 0, 3).is_constant());
  EXPECT_TRUE(parse_function("const[2.5]", 0, 3).eval(h, 0).isApprox(Vector::Constant(3, 2.5)));
  EXPECT_TRUE(parse_function("const[zero]", 0, 3).eval(h, 0).isZero());
  const Vector mix = parse_function("0.4*x[1] + 0.5*relu(x[1]) + 1", 1, 3).eval(h, 1);
  EXPECT_NEAR(mix(0), 0.4 * 0.1 + 0.5 * 0.1 + 1.0, 1e-15);
}

TEST(Expr, RejectsFutureAndGarbage) {
  EXPECT_THROW(parse_function("x[2]", 1, 3), InvalidArgument);
  EXPECT_THROW(parse_function("x[t]", 2, 3), InvalidArgument);
  EXPECT_THROW(parse_function("sin(x[1])", 2, 3), InvalidArgument);
  EXPECT_THROW(parse_function("tanh(const[ones])", 2, 3), InvalidArgument);
  EXPECT_THROW(parse_function("x[1] +", 2, 3), InvalidArgument);
  EXPECT_THROW(parse_function("x[1] x[1]", 2, 3), InvalidArgument);
}

TEST(KeyValues, CommentsAndErrors) {
  const auto kv = parse_key_values("# header\nT = 3  # trailing\n\n n=10,20\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0].first, "T");
  EXPECT_EQ(kv[0].second, "3");
  EXPECT_EQ(kv[1].second, "10,20");
  EXPECT_THROW(parse_key_values("no equals sign\n"), ConfigInvalid);
}

TEST(Config, ApplyAndValidate) {
  ExperimentConfig cfg;
  apply_pairs(cfg, parse_key_values("n = 10, 20\nT = 3\nseed = 5\nr_grid = 0.5, 2\nf.2 = x[1]\npsi = false\n"));
  EXPECT_EQ(cfg.n, (std::vector<Index>{10, 20}));
  EXPECT_EQ(cfg.T, 3);
  EXPECT_EQ(*cfg.seed, 5u);
  EXPECT_EQ(cfg.r_grid, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(cfg.f_at.at(2), "x[1]");
  EXPECT_FALSE(cfg.psi);
  EXPECT_NO_THROW(validate(cfg));
}

TEST(Config, FieldLevelErrors) {
  ExperimentConfig cfg;
  try {
    apply_pairs(cfg, parse_key_values("T = three\nbogus = 1\n"));
    FAIL() << "expected ConfigInvalid";
  } catch (const ConfigInvalid& e) {
    ASSERT_EQ(e.fields().size(), 2u);
    EXPECT_EQ(e.fields()[0].first, "T");
    EXPECT_EQ(e.fields()[1].first, "bogus");
  }
  ExperimentConfig bad;
  bad.n = {2};
  bad.T = 4;
  bad.trials = 0;
  try {
    validate(bad);
    FAIL() << "expected ConfigInvalid";
  } catch (const ConfigInvalid& e) {
    std::vector<std::string> keys;
    for (const auto& [k, m] : e.fields()) keys.push_back(k);
    EXPECT_NE(std::find(keys.begin(), keys.end(), "seed"), keys.end());
    EXPECT_NE(std::find(keys.begin(), keys.end(), "trials"), keys.end());
    EXPECT_NE(std::find(keys.begin(), keys.end(), "n"), keys.end());
  }
}

TEST(Config, CustomModelRequiresEveryStep) {
  ExperimentConfig cfg = config_from(parse_key_values("model = custom\nT = 2\nseed = 1\nf.1 = const[ones]\n"));
  EXPECT_THROW(validate(cfg), ConfigInvalid);
  cfg.f_at[2] = "tanh(x[1])";
  EXPECT_NO_THROW(validate(cfg));
  cfg.se = "explicit";
  EXPECT_THROW(validate(cfg), ConfigInvalid);
}

TEST(Config, PresetThenOverride) {
  const auto cfg = config_from(parse_key_values("preset = linear-ar\ntrials = 7\n"));
  EXPECT_EQ(cfg.preset, "linear-ar");
  EXPECT_EQ(cfg.model, "linear");
  EXPECT_EQ(cfg.trials, 7);
  EXPECT_THROW(preset_config("nope"), ConfigInvalid);
}

TEST(Config, PresetFilesMatchBuiltins) {
  const std::filesystem::path dir = std::filesystem::path(GFOMC_SOURCE_DIR) / "presets";
  for (const auto& [name, text] : builtin_presets()) {
    const auto file = read_config_file((dir / (name + ".cfg")).string());
    ExperimentConfig from_file;
    apply_pairs(from_file, file);
    from_file.preset = name;
    EXPECT_EQ(from_file.echo(), preset_config(name).echo()) << name;
    EXPECT_NO_THROW(validate(from_file)) << name;
  }
}

TEST(Config, ParseMatrix) {
  const Matrix m = parse_matrix("1, 0.5; 0.5, 2");
  EXPECT_EQ(m(0, 1), 0.5);
  EXPECT_EQ(m(1, 1), 2.0);
  EXPECT_THROW(parse_matrix("1, 2; 3"), ConfigInvalid);
}
