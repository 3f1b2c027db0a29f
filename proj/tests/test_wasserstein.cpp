#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gfomc/wasserstein.hpp"

using namespace gfomc;

namespace {

GaussianLaw random_law(Index d, RngStream& rng) {
  const Matrix g = sample_gaussian_matrix(d, d + 2, rng);
  return GaussianLaw(sample_gaussian_matrix(d, 1, rng).col(0), g * g.transpose() / static_cast<double>(d));
}

Matrix scaled_orthonormal(Index n, Index T, RngStream& rng) {
  Eigen::HouseholderQR<Matrix> qr(sample_gaussian_matrix(n, T, rng));
  return Matrix(qr.householderQ() * Matrix::Identity(n, T)) * std::sqrt(static_cast<double>(n));
}

Matrix superdiagonal(Index T, double v) {
  Matrix m = Matrix::Zero(T, T);
  for (Index t = 1; t < T; ++t) m(t - 1, t) = v;
  return m;
}

const double kGap = std::numbers::sqrt2 - 1.0;

}  // namespace

TEST(GaussianLaw, Validation) {
  Matrix asym(2, 2);
  asym << 1, 0.5, 0, 1;
  EXPECT_THROW(GaussianLaw(Vector::Zero(2), asym), InvalidArgument);
  Matrix neg(2, 2);
  neg << 1, 2, 2, 1;
  EXPECT_THROW(GaussianLaw(Vector::Zero(2), neg), NotPositiveSemidefinite);
  EXPECT_THROW(GaussianLaw(Vector::Zero(3), Matrix::Identity(2, 2)), DimensionMismatch);
  EXPECT_EQ(GaussianLaw(Vector::Zero(2), Matrix::Ones(2, 2)).rank(), 1);
}

TEST(W2, EqualLawsAreZero) {
  RngStream rng(90, 0);
  const auto p = random_law(4, rng);
  EXPECT_NEAR(w2_gaussian(p, p), 0.0, 1e-10);
}

TEST(W2, OneDimensional) {
  for (double mu : {-1.0, 0.0, 2.5})
    for (double sd : {0.0, 0.5, 1.0, 3.0}) {
      const GaussianLaw p(Vector::Zero(1), Matrix::Identity(1, 1));
      const GaussianLaw q(Vector::Constant(1, mu), Matrix::Identity(1, 1) * sd * sd);
      EXPECT_NEAR(w2_gaussian(p, q), mu * mu + (1 - sd) * (1 - sd), 1e-12);
    }
}

TEST(W2, RankOneSpike) {
  RngStream rng(91, 0);
  for (Index n : {1, 3, 10, 40}) {
    Vector u = sample_gaussian_matrix(n, 1, rng).col(0);
    u.normalize();
    const GaussianLaw p(Vector::Zero(n), Matrix::Identity(n, n) + u * u.transpose());
    const GaussianLaw q(Vector::Zero(n), Matrix::Identity(n, n));
    EXPECT_NEAR(w2_gaussian(p, q), 3.0 - 2.0 * std::sqrt(2.0), 1e-10);
    EXPECT_NEAR(3.0 - 2.0 * std::sqrt(2.0), 0.17157, 1e-5);
  }
}

TEST(W2, MetricProperties) {
  RngStream rng(92, 0);
  for (int k = 0; k < 200; ++k) {
    const Index d = 1 + k % 5;
    const auto a = random_law(d, rng), b = random_law(d, rng), c = random_law(d, rng);
    const double ab = w2_gaussian(a, b), ba = w2_gaussian(b, a);
    EXPECT_NEAR(ab, ba, 1e-10 * (1.0 + ab));
    EXPECT_LE(std::sqrt(ab), std::sqrt(w2_gaussian(a, c)) + std::sqrt(w2_gaussian(c, b)) + 1e-8);
  }
  EXPECT_THROW(w2_gaussian(random_law(2, rng), random_law(3, rng)), DimensionMismatch);
}

TEST(Sandwich, Values) {
  const auto one = sandwich({2.0});
  EXPECT_DOUBLE_EQ(one.lower, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(one.upper, std::sqrt(2.0));
  const auto four = sandwich({1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(four.lower, 2.0);
  EXPECT_DOUBLE_EQ(four.upper, 4.0);
  RngStream rng(93, 0);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> v(1 + k % 6);
    for (double& x : v) x = rng.uniform() * 3;
    const auto s = sandwich(v);
    EXPECT_LE(s.lower, s.upper + 1e-15);
  }
  EXPECT_THROW(sandwich({1.0, -0.1}), InvalidArgument);
}

TEST(ArAlpha, ClosedForm) {
  EXPECT_EQ(ar_alpha_sq(1.0, 3), 3.0);
  EXPECT_EQ(ar_alpha_sq(-1.0, 7), 7.0);
  EXPECT_EQ(ar_alpha_sq(2.0, 3), 21.0);
  for (Index t = 1; t < 6; ++t) EXPECT_EQ(ar_alpha_sq(0.0, t), 1.0);
  for (double l : {1.0, 1.3, -2.0})
    for (Index t = 1; t < 10; ++t) EXPECT_GT(ar_alpha_sq(l, t + 1), ar_alpha_sq(l, t));
  for (double l : {0.2, 0.5, -0.9})
    for (Index t = 1; t < 60; ++t) EXPECT_LE(ar_alpha_sq(l, t), 1.0 / (1.0 - l * l) + 1e-12);
  EXPECT_THROW(ar_alpha_sq(0.5, 0), InvalidArgument);
}

TEST(ArAlpha, MatchesPropagatedDiagonal) {
  RngStream rng(94, 0);
  const Index n = 60, T = 6;
  for (double l : {0.5, 1.0, 2.0, -0.7}) {
    LinearCaseSpec spec{scaled_orthonormal(n, T, rng), superdiagonal(T, l), superdiagonal(T, l)};
    const auto rep = lb_linear_case(spec, Matrix::Identity(T, T), n);
    for (Index t = 0; t < T; ++t) {
      const double expect = ar_alpha_sq(l, t + 1);
      EXPECT_NEAR(rep.alpha[t] * rep.alpha[t], expect, 1e-12 * expect);
    }
  }
}

TEST(LowerBound, MatchesColumnLaws) {
  RngStream rng(95, 0);
  for (int k = 0; k < 10; ++k) {
    const Index n = 12, T = 3;
    Matrix lambda = Matrix::Zero(T, T), gamma = Matrix::Zero(T, T);
    for (Index s = 0; s < T; ++s)
      for (Index t = s + 1; t < T; ++t) {
        lambda(s, t) = 0.5 * rng.normal();
        gamma(s, t) = 0.5 * rng.normal();
      }
    LinearCaseSpec spec{sample_gaussian_matrix(n, T, rng), lambda, gamma};
    const Matrix g = sample_gaussian_matrix(T, T, rng);
    const Matrix sigma = g * g.transpose() + Matrix::Identity(T, T);
    const auto rep = lb_linear_case(spec, sigma, n);
    for (Index t = 0; t < T; ++t) {
      const auto [px, py] = column_laws(spec, sigma, t);
      EXPECT_NEAR(rep.w2sq_per_t[t], w2_gaussian(px, py), 1e-10 * (1.0 + rep.w2sq_per_t[t]));
    }
    EXPECT_GE(rep.corollary_lb, 0.0);
    EXPECT_LE(rep.bounds.lower, rep.bounds.upper);
  }
}

TEST(LowerBound, MatchedAndOptimal) {
  RngStream rng(96, 0);
  const Index n = 50, T = 4;
  const Matrix lambda = superdiagonal(T, 0.6);
  LinearCaseSpec spec{sample_gaussian_matrix(n, T, rng), lambda, lambda};
  const double nd = static_cast<double>(n);
  const auto matched = lb_linear_case(spec, spec.F.transpose() * spec.F / nd, n);
  const auto best = lb_linear_case(spec, optimal_sigma(spec), n);
  for (Index t = 0; t < T; ++t) {
    const double a2 = matched.alpha[t] * matched.alpha[t];
    EXPECT_NEAR(matched.w2sq_per_t[t], kGap * kGap * a2, 1e-12 * (1.0 + a2));
    EXPECT_NEAR(best.w2sq_per_t[t], (nd - 1.0) / nd * kGap * kGap * a2, 1e-12 * (1.0 + a2));
  }
  double sum = 0.0;
  for (double v : best.w2sq_per_t) sum += v;
  EXPECT_NEAR(sum, best.corollary_lb, 1e-12 * sum);
}

TEST(LowerBound, SingleStepUnitScale) {
  const Index n = 25;
  LinearCaseSpec spec{Matrix::Ones(n, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  const auto rep = lb_linear_case(spec, Matrix::Identity(1, 1), n);
  const double nd = n;
  EXPECT_NEAR(rep.w2sq_per_t[0], (nd - 1) / nd * kGap * kGap + nd * (kGap / nd) * (kGap / nd), 1e-14);
}

TEST(LowerBound, MatchedGammaIsLocalMinimum) {
  RngStream rng(97, 0);
  const Index n = 40, T = 3;
  const Matrix lambda = superdiagonal(T, 0.8);
  LinearCaseSpec spec{sample_gaussian_matrix(n, T, rng), lambda, lambda};
  const Matrix sigma = optimal_sigma(spec);
  auto total = [&](const Matrix& gamma) {
    LinearCaseSpec s = spec;
    s.Gamma = gamma;
    double v = 0.0;
    for (double x : lb_linear_case(s, sigma, n).w2sq_per_t) v += x;
    return v;
  };
  const double at = total(lambda);
  for (int k = 0; k < 200; ++k) {
    Matrix pert = lambda;
    for (Index s = 0; s < T; ++s)
      for (Index t = s + 1; t < T; ++t) pert(s, t) += 0.05 * rng.normal();
    EXPECT_GE(total(pert), at - 1e-12);
  }
}
