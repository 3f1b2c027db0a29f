#pragma once

// Quadratic Wasserstein distances between Gaussian laws, and the column-wise
// lower bound for the linear GFOM (constant f, linear g).

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/state_evolution.hpp"

namespace gfomc {

struct GaussianLaw {
  Vector mean;
  Matrix cov;

  GaussianLaw() = default;
  GaussianLaw(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
      throw DimensionMismatch("GaussianLaw: mean and covariance sizes differ");
    if ((cov - cov.transpose()).norm() > 1e-12 * std::max(cov.norm(), 1.0))
      throw InvalidArgument("GaussianLaw: covariance is not symmetric");
    cov = (0.5 * (cov + cov.transpose())).eval();
    if (dim() > 0) {
      const double floor = -1e-10 * std::max(std::abs(cov.trace()), 1e-300) / static_cast<double>(dim());
      if (symmetric_eigenvalues(cov)(0) < floor) throw NotPositiveSemidefinite("GaussianLaw: covariance not PSD", 0.0);
    }
  }

  Index dim() const noexcept { return mean.size(); }

  /// Number of eigenvalues above tol * trace.
  Index rank(double tol = 1e-12) const {
    const Vector ev = symmetric_eigenvalues(cov);
    const double cut = tol * std::max(cov.trace(), 0.0);
    Index r = 0;
    for (Index i = 0; i < ev.size(); ++i) r += ev(i) > cut ? 1 : 0;
    return r;
  }
};

/// ‖μ_p - μ_q‖² + tr(C_p + C_q - 2 (C_q^{1/2} C_p C_q^{1/2})^{1/2}).
inline double w2_gaussian(const GaussianLaw& p, const GaussianLaw& q) {
  if (p.dim() != q.dim()) throw DimensionMismatch("w2_gaussian: dimensions differ");
  const Matrix root_q = psd_sqrt(q.cov);
  Matrix inner = root_q * p.cov * root_q;
  inner = (0.5 * (inner + inner.transpose())).eval();
  const double cross = psd_sqrt(inner).trace();
  const double value = (p.mean - q.mean).squaredNorm() + p.cov.trace() + q.cov.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

struct Sandwich {
  double lower = 0.0;
  double upper = 0.0;
};

/// (√Σ v_t, Σ √v_t).
inline Sandwich sandwich(const std::vector<double>& per_t) {
  Sandwich s;
  double sum = 0.0;
  for (double v : per_t) {
    if (!(v >= 0.0)) throw InvalidArgument("sandwich: entries must be nonnegative");
    sum += v;
    s.upper += std::sqrt(v);
  }
  s.lower = std::sqrt(sum);
  return s;
}

/// Σ_{s<t} λ^{2s}, the squared column scale of the autoregressive example
/// f_t = 1 (unit-scaled), g_t = λ x_{t-1}.
inline double ar_alpha_sq(double lambda, Index t) {
  if (t < 1) throw InvalidArgument("ar_alpha_sq: t must be >= 1");
  const double l2 = lambda * lambda;
  if (l2 == 1.0) return static_cast<double>(t);
  double sum = 0.0, p = 1.0;
  for (Index s = 0; s < t; ++s) {
    sum += p;
    p *= l2;
  }
  return sum;
}

struct LbReport {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> w2sq_per_t;
  double corollary_lb = 0.0;
  Sandwich bounds;
};

namespace detail {

/// (I - L)^{-T} C (I - L)^{-1}.
inline Matrix propagate(const Matrix& strictly_upper, const Matrix& c) {
  const Matrix inv = inverse_unit_upper(strictly_upper);
  return inv.transpose() * c * inv;
}

}  // namespace detail

/// Per-column squared distances between the law of x_t and the law of y_t
/// when Y uses (Γ, Σ), plus the lower bound valid for every choice of (Γ, Σ).
inline LbReport lb_linear_case(const LinearCaseSpec& spec, const Matrix& sigma, Index n) {
  spec.validate();
  const Index T = spec.T();
  if (sigma.rows() != T || sigma.cols() != T) throw DimensionMismatch("lb_linear_case: Sigma must be T x T");
  if (n < 1) throw InvalidArgument("lb_linear_case: n must be >= 1");
  const double nd = static_cast<double>(n);
  const double k = std::numbers::sqrt2 - 1.0;
  const Matrix ax = detail::propagate(spec.Lambda, spec.F.transpose() * spec.F / nd);
  const Matrix by = detail::propagate(spec.Gamma, sigma);
  LbReport rep;
  double trace = 0.0;
  for (Index t = 0; t < T; ++t) {
    const double a = std::sqrt(std::max(ax(t, t), 0.0));
    const double b = std::sqrt(std::max(by(t, t), 0.0));
    rep.alpha.push_back(a);
    rep.beta.push_back(b);
    const double gap = (1.0 + k / nd) * a - b;
    rep.w2sq_per_t.push_back((nd - 1.0) / nd * k * k * a * a + nd * gap * gap);
    trace += ax(t, t);
  }
  rep.corollary_lb = (nd - 1.0) / nd * k * k * trace;
  rep.bounds = sandwich(rep.w2sq_per_t);
  return rep;
}

/// Exact laws of the t-th columns: x_t = A h with h = F (I - Λ)^{-1} e_t has
/// covariance (1/n)(‖h‖² I + h h^T); y_t has covariance β_t² I.
inline std::pair<GaussianLaw, GaussianLaw> column_laws(const LinearCaseSpec& spec, const Matrix& sigma, Index t) {
  spec.validate();
  const Index n = spec.n();
  const double nd = static_cast<double>(n);
  const Vector h = spec.F * inverse_unit_upper(spec.Lambda).col(t);
  Matrix cx = h * h.transpose() / nd;
  cx.diagonal().array() += h.squaredNorm() / nd;
  const double beta_sq = detail::propagate(spec.Gamma, sigma)(t, t);
  Matrix cy = Matrix::Identity(n, n) * beta_sq;
  return {GaussianLaw(Vector::Zero(n), std::move(cx)), GaussianLaw(Vector::Zero(n), std::move(cy))};
}

/// Σ minimising the per-column distance for Γ = Λ: (1/n)(1 + (√2-1)/n)² F^T F.
inline Matrix optimal_sigma(const LinearCaseSpec& spec) {
  const double nd = static_cast<double>(spec.n());
  const double c = 1.0 + (std::numbers::sqrt2 - 1.0) / nd;
  return c * c * spec.F.transpose() * spec.F / nd;
}

}  // namespace gfomc
