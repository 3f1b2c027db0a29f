#include <gtest/gtest.h>

#include <cmath>

#include "gfomc/conditioning.hpp"

using namespace gfomc;

TEST(CondGaussian, SumOfTwo) {
  // θ ~ N(0, I_2), ξ = θ_1 + θ_2.
  Matrix cov(3, 3);
  cov << 1, 0, 1, 0, 1, 1, 1, 1, 2;
  const auto cmap = cond_gaussian(GaussianLaw(Vector::Zero(3), cov), 2);
  const auto post = cmap(Vector::Constant(1, 3.0));
  EXPECT_NEAR(post.mean(0), 1.5, 1e-14);
  EXPECT_NEAR(post.mean(1), 1.5, 1e-14);
  Matrix expect(2, 2);
  expect << 0.5, -0.5, -0.5, 0.5;
  EXPECT_LT((post.cov - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CondGaussian, DeterministicObservationLeavesPrior) {
  Matrix cov = Matrix::Zero(3, 3);
  cov.topLeftCorner(2, 2) << 2, 0.5, 0.5, 1;
  Vector mean(3);
  mean << 1, -1, 4;
  const auto cmap = cond_gaussian(GaussianLaw(mean, cov), 2);
  const auto post = cmap(Vector::Constant(1, 4.0));
  EXPECT_LT((post.mean - mean.head(2)).norm(), 1e-14);
  EXPECT_LT((post.cov - cov.topLeftCorner(2, 2)).norm(), 1e-14);
}

TEST(CondGaussian, CovarianceIndependentOfObservation) {
  RngStream rng(100, 0);
  const Matrix g = sample_gaussian_matrix(5, 5, rng);
  const auto cmap = cond_gaussian(GaussianLaw(Vector::Zero(5), g * g.transpose()), 2);
  const auto a = cmap(Vector::Constant(3, 1.0));
  const auto b = cmap(Vector::Constant(3, -7.0));
  EXPECT_TRUE(a.cov == b.cov);
  EXPECT_THROW(cmap(Vector::Zero(2)), DimensionMismatch);
}

TEST(CondGaussian, GridQuadratureOracle) {
  RngStream rng(101, 0);
  for (int k = 0; k < 3; ++k) {
    const Matrix g = sample_gaussian_matrix(5, 5, rng);
    const Matrix cov = g * g.transpose() / 5.0 + 0.2 * Matrix::Identity(5, 5);
    const Vector mean = sample_gaussian_matrix(5, 1, rng).col(0) * 0.3;
    const Vector xi = sample_gaussian_matrix(3, 1, rng).col(0);
    const auto post = cond_gaussian(GaussianLaw(mean, cov), 2)(xi);

    // Bayes update on a grid: prior of θ times the likelihood of ξ given θ.
    const Matrix ctt = cov.topLeftCorner(2, 2), ctx = cov.topRightCorner(2, 3), cxx = cov.bottomRightCorner(3, 3);
    const Matrix ctt_inv = ctt.inverse();
    const Matrix lik_gain = ctx.transpose() * ctt_inv;
    const Matrix lik_prec = (cxx - lik_gain * ctx).inverse();
    const double h = 0.01, half = 6.0;
    double z = 0.0;
    Vector m = Vector::Zero(2);
    for (double a = -half; a <= half; a += h)
      for (double b = -half; b <= half; b += h) {
        Vector th(2);
        th << mean(0) + a, mean(1) + b;
        const Vector d = th - mean.head(2);
        const Vector r = xi - mean.tail(3) - lik_gain * d;
        const double w = std::exp(-0.5 * d.dot(ctt_inv * d) - 0.5 * r.dot(lik_prec * r));
        z += w;
        m += w * th;
      }
    m /= z;
    EXPECT_LT((m - post.mean).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(Recursive, BaseCase) {
  RngStream rng(102, 0);
  const auto sys = random_constant_system(4, 2, 2, false, rng);
  const Vector theta = sample_gaussian_matrix(4, 1, rng).col(0);
  const auto steps = recursive_conditionals(sys, sys.simulate(theta));
  const Matrix f1 = sys.F_fns[0]({});
  EXPECT_TRUE(steps[0].theta_mean.isZero());
  EXPECT_TRUE(steps[0].theta_cov.isApprox(Matrix::Identity(4, 4)));
  EXPECT_LT((steps[0].xi_mean - sys.g_fns[0]({})).norm(), 1e-14);
  EXPECT_LT((steps[0].xi_cov - f1 * f1.transpose()).norm(), 1e-12);
}

TEST(Recursive, MatchesJointAssembly) {
  RngStream rng(103, 0);
  for (int k = 0; k < 100; ++k) {
    const Index N = 2 + k % 9, T = 1 + k % 4;
    const Index rows = 1 + k % 2;
    const auto sys = random_constant_system(N, T, rows, k % 3 == 0, rng);
    const Vector theta = sample_gaussian_matrix(N, 1, rng).col(0);
    EXPECT_LE(joint_assembly_discrepancy(sys, sys.simulate(theta)), 1e-10) << "instance " << k;
  }
}

TEST(Recursive, RankDeficientProjection) {
  RngStream rng(104, 0);
  const auto sys = random_constant_system(5, 3, 2, true, rng);
  const auto steps = recursive_conditionals(sys, sys.simulate(sample_gaussian_matrix(5, 1, rng).col(0)));
  for (const auto& s : steps) EXPECT_LT((s.theta_cov * s.theta_cov - s.theta_cov).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Recursive, InconsistentRealizationRejected) {
  RngStream rng(105, 0);
  // With N = 2 the first two rows already determine θ, so step 2 is fully pinned.
  const auto sys = random_constant_system(2, 2, 2, false, rng);
  auto xi = sys.simulate(sample_gaussian_matrix(2, 1, rng).col(0));
  xi[1](0) += 1.0;
  EXPECT_THROW(recursive_conditionals(sys, xi), InconsistentRealization);
}

TEST(Recursive, AdaptiveSystemTower) {
  // F_2 depends on ξ_1; marginalising the step-1 conditional over simulated
  // ξ_1 reproduces the prior mean and covariance of θ.
  constexpr Index N = 3;
  AdaptedLinearSystem sys;
  sys.N = N;
  sys.T = 2;
  Matrix f1(1, N);
  f1 << 1.0, 0.5, -0.2;
  sys.F_fns.push_back([f1](const AdaptedLinearSystem::History&) { return f1; });
  sys.F_fns.push_back([](const AdaptedLinearSystem::History& h) {
    Matrix f(1, 3);
    f << std::tanh(h[0](0)), 1.0, 0.3;
    return f;
  });
  sys.g_fns.push_back([](const AdaptedLinearSystem::History&) { return Vector::Zero(1); });
  sys.g_fns.push_back([](const AdaptedLinearSystem::History& h) { return Vector::Constant(1, 0.1 * h[0](0)); });

  RngStream rng(106, 0);
  Vector mean_acc = Vector::Zero(N);
  Matrix second = Matrix::Zero(N, N);
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const Vector theta = sample_gaussian_matrix(N, 1, rng).col(0);
    const auto steps = recursive_conditionals(sys, sys.simulate(theta));
    mean_acc += steps[1].theta_mean;
    second += steps[1].theta_cov + steps[1].theta_mean * steps[1].theta_mean.transpose();
  }
  mean_acc /= draws;
  second /= draws;
  EXPECT_LT(mean_acc.cwiseAbs().maxCoeff(), 5.0 / std::sqrt(static_cast<double>(draws)));
  EXPECT_LT((second - Matrix::Identity(N, N)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Projection, IdentityOnRandomInstances) {
  RngStream rng(107, 0);
  for (int k = 0; k < 200; ++k) {
    const Index N = 2 + k % 8;
    Matrix prev = sample_gaussian_matrix(1 + k % 3, N, rng);
    Matrix cur = sample_gaussian_matrix(1 + k % 2, N, rng);
    if (k % 4 == 0) cur.row(0) = prev.row(0);
    EXPECT_LE(projection_identity_residual(prev, cur), 1e-10);
  }
  EXPECT_LE(projection_identity_residual(Matrix(0, 3), Matrix::Ones(1, 3)), 1e-12);
}
