#include <gtest/gtest.h>

#include <cmath>

#include "gfomc/lemmas.hpp"

using namespace gfomc;

TEST(CholPert, IdentityIsTight) {
  const auto c = check_chol_pert(UpperTriMatrix(Matrix::Identity(3, 3)));
  EXPECT_EQ(c.lhs1, 0.0);
  EXPECT_EQ(c.rhs1, 0.0);
  EXPECT_TRUE(c.holds());
}

TEST(CholPert, DiagonalHandValue) {
  const auto c = check_chol_pert(UpperTriMatrix(Matrix::Identity(2, 2) * 1.1));
  EXPECT_NEAR(c.lhs1, 0.1, 1e-14);
  // 2 log2(8) (1.21 - 1)
  EXPECT_NEAR(c.rhs1, 1.26, 1e-13);
  EXPECT_NEAR(c.lhs2, 0.01, 1e-14);
  EXPECT_NEAR(c.rhs2, 9.0 * 3.0 * 0.21, 1e-12);
  EXPECT_TRUE(c.holds());
}

TEST(CholPert, RandomInstances) {
  RngStream rng(80, 0);
  int violations = 0;
  for (int k = 0; k < 10000; ++k) {
    const Index T = 2 + k % 7;
    violations += check_chol_pert(random_upper(T, rng)).holds() ? 0 : 1;
  }
  EXPECT_EQ(violations, 0);
}

TEST(CholPert, NearIdentityInstances) {
  RngStream rng(81, 0);
  for (int k = 0; k < 2000; ++k) {
    Matrix u = Matrix::Identity(4, 4);
    for (Index j = 0; j < 4; ++j)
      for (Index i = 0; i <= j; ++i) u(i, j) += 1e-3 * rng.normal();
    u.diagonal() = u.diagonal().cwiseAbs();
    EXPECT_TRUE(check_chol_pert(UpperTriMatrix(u)).holds());
  }
}

TEST(Stability, ConstantMapIsShift) {
  const Index n = 5, T = 3;
  RngStream rng(82, 0);
  std::vector<FunctionSpec> h(T, FunctionSpec::constant(Vector::Ones(n)));
  const Matrix u = sample_gaussian_matrix(n, T, rng), up = sample_gaussian_matrix(n, T, rng);
  const auto c = check_stability(h, u, up);
  EXPECT_NEAR(c.lip_lhs, (u - up).norm(), 1e-12);
  EXPECT_NEAR(c.lip_rhs, std::sqrt(3.0) * (u - up).norm(), 1e-12);
  EXPECT_TRUE(c.holds());
}

TEST(Stability, ScalarLinearAdversarial) {
  const double l = 1.5;
  const Index T = 5;
  std::vector<FunctionSpec> h = {FunctionSpec::constant(Vector::Zero(1))};
  for (Index t = 1; t < T; ++t) h.push_back(FunctionSpec::linear({{t - 1, l}}));
  // A perturbation only in the first control is amplified by l^{T-1}.
  Matrix u = Matrix::Zero(1, T), up = Matrix::Zero(1, T);
  up(0, 0) = 1.0;
  const auto c = check_stability(h, u, up);
  EXPECT_TRUE(c.holds());
  EXPECT_LE(c.lip_lhs / c.lip_rhs, 1.0);
  EXPECT_THROW(check_stability({FunctionSpec::linear({{0, 1.0}})}, u.leftCols(1), up.leftCols(1)), InvalidArgument);
}

TEST(Stability, RandomSystems) {
  RngStream rng(83, 0);
  int violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const Index T = 1 + k % 6, n = 1 + k % 5;
    const auto h = random_recursion(T, n, rng);
    const Matrix u = sample_gaussian_matrix(n, T, rng);
    const Matrix up = u + sample_gaussian_matrix(n, T, rng) * (k % 3 ? 0.1 : 2.0);
    violations += check_stability(h, u, up).holds() ? 0 : 1;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Concentration, FirstCoordinate) {
  const auto rows = check_concentration([](RngStream& r) { return r.normal(); }, 0.0, 1.0, 20000, {1, 2, 4},
                                        RngStream(84, 0));
  for (const auto& row : rows) {
    EXPECT_TRUE(row.consistent) << "r=" << row.r;
    EXPECT_LE(row.frequency, row.ceiling);
  }
  // Gaussian tail at √2: P(G >= 1.414) ≈ 0.0786.
  EXPECT_NEAR(rows[0].frequency, 0.0786, 0.01);
}

TEST(Concentration, ChiNorm) {
  const Index n = 100;
  // E‖z‖ for chi with n dof: √2 Γ((n+1)/2) / Γ(n/2).
  const double mean = std::sqrt(2.0) * std::exp(std::lgamma((n + 1) / 2.0) - std::lgamma(n / 2.0));
  const auto rows = check_concentration(
      [n](RngStream& r) {
        Vector z(n);
        r.fill_normal(std::span<double>(z.data(), static_cast<std::size_t>(n)));
        return z.norm();
      },
      mean, 1.0, 5000, {1, 2, 4}, RngStream(85, 0));
  for (const auto& row : rows) EXPECT_TRUE(row.consistent) << "r=" << row.r;
}

TEST(Concentration, GramDeviation) {
  const Index n = 200, d = 2;
  const Matrix mix = [] {
    Matrix m(2, 2);
    m << 1.0, 0.3, 0.0, 0.8;
    return m;
  }();
  // H = G M / √n with G standard: E H^T H = M^T M, ‖Hu‖ is ‖Mu‖/√n-Lipschitz in G.
  const double lip = operator_norm(mix) / std::sqrt(static_cast<double>(n));
  const auto rows = check_hth_concentration(
      [&](RngStream& r) { return Matrix(sample_gaussian_matrix(n, d, r) * mix / std::sqrt(static_cast<double>(n))); },
      mix.transpose() * mix, lip, 2000, {1, 2, 4}, RngStream(86, 0));
  for (const auto& row : rows) EXPECT_TRUE(row.consistent) << "r=" << row.r;
}
