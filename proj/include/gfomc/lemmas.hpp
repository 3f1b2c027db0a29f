#pragma once

// Numerical checkers for the supporting inequalities: Cholesky perturbation,
// stability of triangular recursions, Gaussian concentration.

#include <cmath>
#include <functional>
#include <vector>

#include "gfomc/dynamics.hpp"
#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/rng.hpp"
#include "gfomc/stats.hpp"

namespace gfomc {

struct CholPertCheck {
  double lhs1 = 0.0, rhs1 = 0.0;
  double lhs2 = 0.0, rhs2 = 0.0;
  bool hold1 = true, hold2 = true;
  bool holds() const noexcept { return hold1 && hold2; }
};

/// ‖U - I‖ <= 2 log2(4T) ‖U^T U - I‖ and ‖U - I‖^2 <= 9 log2(4T) ‖U^T U - I‖.
inline CholPertCheck check_chol_pert(const UpperTriMatrix& u, double rel_slack = 1e-12) {
  const Index T = u.size();
  const Matrix id = Matrix::Identity(T, T);
  const double dev = operator_norm(u.matrix() - id);
  const double gram_dev = symmetric_eigenvalues(u.gram() - id).cwiseAbs().maxCoeff();
  const double c = std::log2(4.0 * static_cast<double>(T));
  CholPertCheck out;
  out.lhs1 = dev;
  out.rhs1 = 2.0 * c * gram_dev;
  out.lhs2 = dev * dev;
  out.rhs2 = 9.0 * c * gram_dev;
  out.hold1 = out.lhs1 <= out.rhs1 * (1.0 + rel_slack) + rel_slack;
  out.hold2 = out.lhs2 <= out.rhs2 * (1.0 + rel_slack) + rel_slack;
  return out;
}

/// Random upper triangular U: N(0, scale^2) above the diagonal, |N(1, 0.5)| on it.
inline UpperTriMatrix random_upper(Index T, RngStream& rng, double scale = 1.0) {
  Matrix u = Matrix::Zero(T, T);
  for (Index j = 0; j < T; ++j) {
    u(j, j) = std::abs(1.0 + 0.5 * rng.normal());
    for (Index i = 0; i < j; ++i) u(i, j) = scale * rng.normal();
  }
  return UpperTriMatrix(std::move(u));
}

/// v_t = h_t(v_{<t}) + u_t.
inline Matrix run_recursion(const std::vector<FunctionSpec>& h, const Matrix& u) {
  const Index T = static_cast<Index>(h.size());
  if (u.cols() != T) throw DimensionMismatch("run_recursion: control has the wrong number of columns");
  Matrix v = Matrix::Zero(u.rows(), T);
  for (Index t = 0; t < T; ++t) v.col(t) = h[t].eval(v, t) + u.col(t);
  return v;
}

struct StabilityCheck {
  /// ‖φ(u) - φ(u')‖ against √T (1+L)^{T-1} ‖u - u'‖.
  double lip_lhs = 0.0, lip_rhs = 0.0;
  /// ‖x - y‖ against (1+L)^{T-1} Σ_t ‖y_t - h_t(y_{<t})‖, where x = φ(0) and y = u'.
  double dev_lhs = 0.0, dev_rhs = 0.0;
  bool lip_hold = true, dev_hold = true;
  bool holds() const noexcept { return lip_hold && dev_hold; }
};

inline StabilityCheck check_stability(const std::vector<FunctionSpec>& h, const Matrix& u, const Matrix& u_prime,
                                      double rel_slack = 1e-10) {
  const Index T = static_cast<Index>(h.size());
  if (T < 1) throw InvalidArgument("check_stability: empty system");
  if (!h[0].is_constant()) throw InvalidArgument("check_stability: h_1 must be constant");
  if (u.rows() != u_prime.rows() || u.cols() != u_prime.cols()) throw DimensionMismatch("check_stability: shapes differ");
  double lip = 0.0;
  for (const auto& s : h) lip = std::max(lip, s.lipschitz());
  const double growth = std::pow(1.0 + lip, static_cast<double>(T - 1));

  StabilityCheck out;
  out.lip_lhs = (run_recursion(h, u) - run_recursion(h, u_prime)).norm();
  out.lip_rhs = std::sqrt(static_cast<double>(T)) * growth * (u - u_prime).norm();
  out.lip_hold = out.lip_lhs <= out.lip_rhs * (1.0 + rel_slack) + rel_slack;

  const Matrix x = run_recursion(h, Matrix::Zero(u.rows(), T));
  const Matrix& y = u_prime;
  double resid = 0.0;
  for (Index t = 0; t < T; ++t) resid += (y.col(t) - h[t].eval(y, t)).norm();
  out.dev_lhs = (x - y).norm();
  out.dev_rhs = growth * resid;
  out.dev_hold = out.dev_lhs <= out.dev_rhs * (1.0 + rel_slack) + rel_slack;
  return out;
}

struct TailRow {
  double r = 0.0;
  double threshold = 0.0;
  std::size_t trials = 0;
  std::size_t exceed = 0;
  double frequency = 0.0;
  stats::Interval wilson;
  double ceiling = 0.0;
  /// The Wilson interval reaches down to the ceiling.
  bool consistent = true;
};

/// Empirical P[f(z) >= E f + L √(2r)] against e^{-r}. `mean` is E f(z).
inline std::vector<TailRow> check_concentration(const std::function<double(RngStream&)>& sample_fn, double mean,
                                                double lipschitz, std::size_t trials,
                                                const std::vector<double>& r_grid, RngStream rng,
                                                double confidence = 0.99) {
  if (trials == 0) throw InvalidArgument("check_concentration: zero trials");
  std::vector<double> values(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    RngStream ri = rng.substream(i);
    values[i] = sample_fn(ri);
  }
  std::vector<TailRow> rows;
  for (double r : r_grid) {
    TailRow row;
    row.r = r;
    row.threshold = mean + lipschitz * std::sqrt(2.0 * r);
    row.trials = trials;
    for (double v : values) row.exceed += v >= row.threshold ? 1 : 0;
    row.frequency = static_cast<double>(row.exceed) / static_cast<double>(trials);
    row.wilson = stats::wilson_interval(row.exceed, trials, confidence);
    row.ceiling = std::exp(-r);
    row.consistent = row.wilson.lower <= row.ceiling;
    rows.push_back(row);
  }
  return rows;
}

/// Empirical P[‖H^T H - E H^T H‖ >= 4 ‖E H^T H‖^{1/2} L √(2r) + 2 L^2 (2r + 1)]
/// against 2 · 9^d e^{-r}, for H (n x d) with ‖Hu‖ sub-Gaussian with proxy L^2.
inline std::vector<TailRow> check_hth_concentration(const std::function<Matrix(RngStream&)>& sample_h,
                                                    const Matrix& expected_hth, double lipschitz, std::size_t trials,
                                                    const std::vector<double>& r_grid, RngStream rng,
                                                    double confidence = 0.99) {
  if (trials == 0) throw InvalidArgument("check_hth_concentration: zero trials");
  const Index d = expected_hth.rows();
  const double e_norm = symmetric_eigenvalues(expected_hth).cwiseAbs().maxCoeff();
  std::vector<double> devs(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    RngStream ri = rng.substream(i);
    const Matrix h = sample_h(ri);
    if (h.cols() != d) throw DimensionMismatch("check_hth_concentration: H has the wrong width");
    devs[i] = symmetric_eigenvalues(h.transpose() * h - expected_hth).cwiseAbs().maxCoeff();
  }
  std::vector<TailRow> rows;
  for (double r : r_grid) {
    TailRow row;
    row.r = r;
    row.threshold = 4.0 * std::sqrt(e_norm) * lipschitz * std::sqrt(2.0 * r) +
                    2.0 * lipschitz * lipschitz * (2.0 * r + 1.0);
    row.trials = trials;
    for (double v : devs) row.exceed += v >= row.threshold ? 1 : 0;
    row.frequency = static_cast<double>(row.exceed) / static_cast<double>(trials);
    row.wilson = stats::wilson_interval(row.exceed, trials, confidence);
    row.ceiling = std::min(1.0, 2.0 * std::pow(9.0, static_cast<double>(d)) * std::exp(-r));
    row.consistent = row.wilson.lower <= row.ceiling;
    rows.push_back(row);
  }
  return rows;
}


/// Random triangular recursion of length T in dimension n: h_1 is a random
/// constant, later steps mix tanh and linear maps of random past columns.
inline std::vector<FunctionSpec> random_recursion(Index T, Index n, RngStream& rng) {
  std::vector<FunctionSpec> h;
  Vector c0(n);
  rng.fill_normal(std::span<double>(c0.data(), static_cast<std::size_t>(n)));
  h.push_back(FunctionSpec::constant(c0));
  for (Index t = 1; t < T; ++t) {
    std::vector<Term> terms;
    for (Index s = 0; s < t; ++s)
      if (s == t - 1 || rng.uniform() < 0.5) terms.push_back({s, 0.8 * rng.normal()});
    if (rng.uniform() < 0.5) {
      h.push_back(FunctionSpec::separable(ScalarFn::tanh, std::move(terms)));
    } else {
      std::vector<std::pair<double, FunctionSpec>> parts;
      parts.emplace_back(1.0, FunctionSpec::linear(terms));
      parts.emplace_back(rng.normal(), FunctionSpec::separable(ScalarFn::tanh, {{t - 1, 1.0}}));
      h.push_back(FunctionSpec::composite(std::move(parts)));
    }
  }
  return h;
}

}  // namespace gfomc
