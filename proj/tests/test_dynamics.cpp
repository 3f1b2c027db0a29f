#include <gtest/gtest.h>

#include <cmath>

#include "gfomc/dynamics.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/state_evolution.hpp"

using namespace gfomc;

namespace {

double probe_lipschitz(const FunctionSpec& spec, Index n, Index T, RngStream& rng) {
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Matrix h1 = sample_gaussian_matrix(n, T, rng) * 2.0;
    const Matrix h2 = h1 + sample_gaussian_matrix(n, T, rng) * (k % 2 ? 1e-3 : 1.0);
    const double num = (spec.eval(h1, T) - spec.eval(h2, T)).norm();
    const double den = (h1 - h2).norm();
    worst = std::max(worst, num / den);
  }
  return worst;
}

}  // namespace

TEST(FunctionSpec, Evaluation) {
  Matrix h(2, 2);
  h << 1, -2, 3, 0.5;
  EXPECT_TRUE(FunctionSpec::linear({{0, 2.0}, {1, -1.0}}).eval(h, 2).isApprox(Vector{{4.0, 5.5}}));
  const Vector th = FunctionSpec::separable(ScalarFn::tanh, {{0, 1.0}}).eval(h, 1);
  EXPECT_NEAR(th(0), std::tanh(1.0), 1e-15);
  const Vector st = FunctionSpec::separable(ScalarFn::soft_threshold, {{1, 1.0}}, 1.0).eval(h, 2);
  EXPECT_DOUBLE_EQ(st(0), -1.0);
  EXPECT_DOUBLE_EQ(st(1), 0.0);
  const Vector relu = FunctionSpec::separable(ScalarFn::relu, {{1, 1.0}}).eval(h, 2);
  EXPECT_DOUBLE_EQ(relu(0), 0.0);
  EXPECT_DOUBLE_EQ(relu(1), 0.5);
  EXPECT_TRUE(FunctionSpec::zero().eval(h, 0).isZero());
}

TEST(FunctionSpec, MissingHistoryThrows) {
  const auto f = FunctionSpec::linear({{2, 1.0}});
  EXPECT_THROW(f.eval(Matrix::Zero(3, 3), 2), MissingHistory);
  EXPECT_NO_THROW(f.eval(Matrix::Zero(3, 3), 3));
}

TEST(FunctionSpec, DeclaredLipschitzBelowComputedRejected) {
  const auto f = FunctionSpec::linear({{0, 3.0}});
  EXPECT_THROW(f.with_lipschitz(2.0), InvalidArgument);
  EXPECT_EQ(f.with_lipschitz(5.0).lipschitz(), 5.0);
}

TEST(FunctionSpec, LipschitzConstantsHoldOnProbes) {
  RngStream rng(30, 0);
  const Index n = 40, T = 3;
  Matrix mix = sample_gaussian_matrix(n, n, rng) / std::sqrt(static_cast<double>(n));
  const std::vector<FunctionSpec> specs = {
      FunctionSpec::linear({{0, 1.5}, {2, -0.5}}),
      FunctionSpec::separable(ScalarFn::tanh, {{1, 2.0}}),
      FunctionSpec::separable(ScalarFn::soft_threshold, {{0, 1.0}, {1, 1.0}}, 0.3),
      FunctionSpec::separable(ScalarFn::relu, {{2, -1.0}}),
      FunctionSpec::matrix_linear(mix, 1),
      FunctionSpec::composite({{0.5, FunctionSpec::separable(ScalarFn::tanh, {{0, 1.0}})},
                               {-2.0, FunctionSpec::linear({{1, 1.0}})}}),
  };
  for (const auto& s : specs) {
    EXPECT_LE(probe_lipschitz(s, n, T, rng), 1.05 * s.lipschitz()) << s.describe();
  }
}

TEST(Trajectory, RejectsNonFinite) {
  Trajectory t(2, 2);
  Vector bad(2);
  bad << 1.0, std::nan("");
  EXPECT_THROW(t.push(bad), NonFinite);
  t.push(Vector::Ones(2));
  t.push(Vector::Ones(2));
  EXPECT_TRUE(t.complete());
  EXPECT_THROW(t.push(Vector::Ones(2)), InvalidArgument);
}

TEST(Gfom, LinearClosedForm) {
  RngStream rng(31, 0);
  for (int k = 0; k < 20; ++k) {
    const Index n = 30, T = 4;
    LinearCaseSpec spec;
    spec.F = sample_gaussian_matrix(n, T, rng);
    spec.Lambda = Matrix::Zero(T, T);
    spec.Gamma = Matrix::Zero(T, T);
    for (Index s = 0; s < T; ++s)
      for (Index t = s + 1; t < T; ++t) spec.Lambda(s, t) = rng.normal() * 0.5;
    const auto a = sample_goe(n, rng);
    const Trajectory x = run_gfom(to_system(spec), a);
    const Matrix closed = a.matrix() * spec.F * inverse_unit_upper(spec.Lambda);
    EXPECT_LE((x.columns() - closed).norm() / closed.norm(), 1e-12);
  }
}

TEST(Gfom, CausalityUnderFutureMutation) {
  RngStream rng(32, 0);
  const Index n = 25, T = 4;
  SystemSpec sys{n, T, {}, {}};
  sys.f.push_back(FunctionSpec::constant(Vector::Ones(n)));
  sys.g.push_back(FunctionSpec::zero());
  for (Index t = 1; t < T; ++t) {
    sys.f.push_back(FunctionSpec::separable(ScalarFn::tanh, {{t - 1, 1.0}}));
    sys.g.push_back(FunctionSpec::linear({{t - 1, 0.3}}));
  }
  const auto a = sample_goe(n, rng);
  const Trajectory base = run_gfom(sys, a);
  for (Index t = 0; t < T; ++t) {
    SystemSpec mutated = sys;
    for (Index u = t + 1; u < T; ++u) mutated.f[u] = FunctionSpec::separable(ScalarFn::relu, {{u - 1, -3.0}});
    const Trajectory other = run_gfom(mutated, a);
    EXPECT_TRUE(base.columns().leftCols(t + 1) == other.columns().leftCols(t + 1));
  }
}

TEST(Gfom, ValidationRejectsLookahead) {
  SystemSpec sys{5, 2, {FunctionSpec::constant(Vector::Ones(5)), FunctionSpec::linear({{1, 1.0}})},
                 {FunctionSpec::zero(), FunctionSpec::zero()}};
  EXPECT_THROW(sys.validate(), InvalidArgument);
  SystemSpec tall{2, 3, {}, {}};
  EXPECT_THROW(tall.validate(), InvalidArgument);
}

TEST(Comparison, ReconstructsNoise) {
  RngStream rng(33, 0);
  const Index n = 50, T = 3;
  Matrix sigma(T, T);
  sigma << 1.0, 0.3, 0.1, 0.3, 1.2, 0.2, 0.1, 0.2, 0.9;
  const UpperTriMatrix omega = cholesky_upper(sigma).factor;
  const std::vector<FunctionSpec> m = {FunctionSpec::zero(), FunctionSpec::separable(ScalarFn::tanh, {{0, 1.0}}),
                                       FunctionSpec::linear({{0, 0.5}, {1, -0.7}})};
  const Matrix z = sample_gaussian_matrix(n, T, rng);
  const auto res = run_comparison(m, omega, z);
  const Matrix mcols = evaluate_columns(m, res.y.columns());
  EXPECT_LE((res.y.columns() - mcols - z * omega.matrix()).norm(), 1e-12);
}

TEST(Comparison, ZeroMeanGivesPureNoise) {
  RngStream rng(34, 0);
  const Index n = 20, T = 3;
  const UpperTriMatrix omega = cholesky_upper(Matrix::Identity(T, T) * 4.0).factor;
  const Matrix z = sample_gaussian_matrix(n, T, rng);
  const auto res = run_comparison({FunctionSpec::zero(), FunctionSpec::zero(), FunctionSpec::zero()}, omega, z);
  EXPECT_LE((res.y.columns() - 2.0 * z).norm(), 1e-14);
}

TEST(Amp, OnsagerWeightsApplied) {
  const Index n = 10, T = 3;
  std::vector<FunctionSpec> f = {FunctionSpec::constant(Vector::Ones(n)),
                                 FunctionSpec::linear({{0, 1.0}}), FunctionSpec::linear({{1, 1.0}})};
  Matrix b = Matrix::Zero(T, T);
  b(0, 1) = 0.4;
  b(0, 2) = 0.1;
  b(1, 2) = 0.7;
  const auto sys = amp_from_f(f, b, n);
  Matrix h = Matrix::Zero(n, T);
  h.col(0).setConstant(2.0);
  h.col(1).setConstant(3.0);
  EXPECT_TRUE(sys.g[1].eval(h, 1).isApprox(Vector::Constant(n, -0.4)));
  // g_3 = -0.1 * 1 - 0.7 * x_1
  EXPECT_TRUE(sys.g[2].eval(h, 2).isApprox(Vector::Constant(n, -0.1 - 1.4)));
}
