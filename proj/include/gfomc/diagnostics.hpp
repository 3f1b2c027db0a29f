#pragma once

// Error functionals of a coupled run and the high-probability bounds on
// ‖X - Y‖ built from them.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gfomc/coupling.hpp"
#include "gfomc/dynamics.hpp"
#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/parallel.hpp"
#include "gfomc/rng.hpp"
#include "gfomc/state_evolution.hpp"
#include "gfomc/stats.hpp"

namespace gfomc {

namespace detail {

/// Ω^{-1} X for Ω upper triangular; throws SingularSigma on a zero pivot.
inline void require_invertible(const UpperTriMatrix& omega) {
  const Matrix& o = omega.matrix();
  const double scale = std::max(o.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (Index i = 0; i < o.rows(); ++i)
    if (!(o(i, i) > 1e-12 * scale)) throw SingularSigma("Sigma is singular: Omega has a zero pivot");
}

inline Matrix sigma_inverse_times(const UpperTriMatrix& omega, const Matrix& x) {
  const auto u = omega.matrix().triangularView<Eigen::Upper>();
  // Σ^{-1} X = Ω^{-1} Ω^{-T} X
  Matrix tmp = u.transpose().solve(x);
  return u.solve(tmp);
}

/// (1/n) Ω^{-T} F^T F Ω^{-1}.
inline Matrix whitened_gram(const UpperTriMatrix& omega, const Matrix& f) {
  const auto u = omega.matrix().triangularView<Eigen::Upper>();
  const Matrix g = f.transpose() * f / static_cast<double>(f.rows());
  Matrix left = u.transpose().solve(g);                                   // Ω^{-T} G
  Matrix s = u.transpose().solve(left.transpose()).transpose();           // Ω^{-T} G Ω^{-1}
  return 0.5 * (s + s.transpose());
}

}  // namespace detail

struct BnSn {
  Matrix Bn;
  Matrix Sn;
};

/// Bn = (1/n) Σ^{-1} (Y - M(Y))^T F(Y),  Sn = (1/n) Ω^{-T} F(Y)^T F(Y) Ω^{-1}.
inline BnSn compute_Bn_Sn(const CoupledRun& run, const SeParams& params) {
  detail::require_invertible(params.Omega);
  const Matrix resid = run.Y.columns() - run.MY;
  const Matrix cross = resid.transpose() * run.FY / static_cast<double>(run.n);
  return {detail::sigma_inverse_times(params.Omega, cross), detail::whitened_gram(params.Omega, run.FY)};
}

struct Deltas {
  double delta1 = 0.0;
  double delta2 = 0.0;
};

inline double delta1_from(const Matrix& fy, const Matrix& my, const Matrix& gy, const Matrix& bn,
                          const UpperTriMatrix& omega) {
  return two_one_norm(my - gy - fy * bn) / two_one_norm(omega.matrix());
}

inline double delta2_from(const Matrix& sn, Index n) {
  const Index T = sn.rows();
  const double op = symmetric_eigenvalues(sn - Matrix::Identity(T, T)).cwiseAbs().maxCoeff();
  return 52.0 * std::log2(4.0 * static_cast<double>(T)) * std::sqrt(static_cast<double>(n)) * op;
}

inline Deltas deltas(const CoupledRun& run, const SeParams& params) {
  const auto bs = compute_Bn_Sn(run, params);
  return {delta1_from(run.FY, run.MY, run.GY, bs.Bn, params.Omega), delta2_from(bs.Sn, run.n)};
}

/// (1 + 4L_f + L_g)^{T-1} (Δ1 + Δ2 + 2√T + √(2r)) ‖Ω‖_{2,1}, valid for 0 <= r <= n.
inline double bound_thm4(double lf, double lg, double omega_21, Index T, double delta1, double delta2, double r,
                         Index n) {
  if (!(r >= 0.0) || r > static_cast<double>(n)) throw InvalidArgument("bound_thm4: r must lie in [0, n]");
  if (T < 1) throw InvalidArgument("bound_thm4: T must be >= 1");
  const double growth = std::pow(1.0 + 4.0 * lf + lg, static_cast<double>(T - 1));
  return growth * (delta1 + delta2 + 2.0 * std::sqrt(static_cast<double>(T)) + std::sqrt(2.0 * r)) * omega_21;
}

/// log2(2T) + √T (L_f + L_g + L_m)(1 + L_m)^{T-1} κ(Σ)^{1/2}.
inline double composite_lipschitz(double lf, double lg, double lm, Index T, double kappa) {
  const double t = static_cast<double>(T);
  return std::log2(2.0 * t) + std::sqrt(t) * (lf + lg + lm) * std::pow(1.0 + lm, t - 1.0) * std::sqrt(kappa);
}

/// Shape of the general bound with the universal constant set to 1:
/// (1 + 4L_f + L_g)^{T-1} (ψ1 + L ψ2 + L^3 (√T + √r)) ‖Ω‖_{2,1}.
inline double bound_thm5(double lf, double lg, double omega_21, Index T, double psi1, double psi2,
                         double l_composite, double r, Index n) {
  if (!(r >= 0.0) || r > static_cast<double>(n)) throw InvalidArgument("bound_thm5: r must lie in [0, n]");
  const double growth = std::pow(1.0 + 4.0 * lf + lg, static_cast<double>(T - 1));
  const double l = l_composite;
  return growth * (psi1 + l * psi2 + l * l * l * (std::sqrt(static_cast<double>(T)) + std::sqrt(r))) * omega_21;
}

struct PsiTerms {
  double psi1 = 0.0;
  double psi2 = 0.0;
  double L_composite = 0.0;
  /// Population B and S estimated from the replicates.
  Matrix B;
  Matrix S;
  double psi1_stderr = 0.0;
};

/// Population error terms from K fresh replicates of the comparison process.
inline PsiTerms psi_terms(const SystemSpec& sys, const SeParams& params, Index K, RngStream rng, int threads = 1) {
  sys.validate();
  if (K < 2) throw InvalidArgument("psi_terms: K must be >= 2");
  detail::require_invertible(params.Omega);
  const Index n = sys.n, T = sys.T;
  const double inv_n = 1.0 / static_cast<double>(n);
  struct Rep {
    Matrix cross, gram, fy, mg;
  };
  std::vector<Rep> reps(static_cast<std::size_t>(K));
  parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t k) {
    RngStream rk = rng.substream(k);
    const Matrix z = sample_gaussian_matrix(n, T, rk);
    auto cmp = run_comparison(params.m, params.Omega, z);
    const Matrix& y = cmp.y.columns();
    Rep rep;
    rep.fy = evaluate_columns(sys.f, y);
    rep.mg = evaluate_columns(params.m, y) - evaluate_columns(sys.g, y);
    rep.cross = cmp.w.transpose() * rep.fy * inv_n;
    rep.gram = rep.fy.transpose() * rep.fy * inv_n;
    reps[k] = std::move(rep);
  });
  Matrix cross = Matrix::Zero(T, T), gram = Matrix::Zero(T, T);
  for (const auto& r : reps) {
    cross += r.cross;
    gram += r.gram;
  }
  cross /= static_cast<double>(K);
  gram /= static_cast<double>(K);

  PsiTerms out;
  out.B = detail::sigma_inverse_times(params.Omega, cross);
  {
    const auto u = params.Omega.matrix().triangularView<Eigen::Upper>();
    Matrix left = u.transpose().solve(gram);
    Matrix s = u.transpose().solve(left.transpose()).transpose();
    out.S = 0.5 * (s + s.transpose());
  }
  const double omega_21 = two_one_norm(params.Omega.matrix());
  stats::RunningMoments acc;
  for (const auto& r : reps) acc.add(two_one_norm(r.mg - r.fy * out.B) / omega_21);
  out.psi1 = acc.mean();
  out.psi1_stderr = acc.stderr_of_mean();
  out.psi2 = std::sqrt(static_cast<double>(n)) *
             symmetric_eigenvalues(out.S - Matrix::Identity(T, T)).cwiseAbs().maxCoeff();
  double lm = 0.0;
  for (const auto& s : params.m) lm = std::max(lm, s.lipschitz());
  out.L_composite = composite_lipschitz(sys.lipschitz_f(), sys.lipschitz_g(), lm, T, condition_number(params.Sigma));
  return out;
}

struct ErrorReport {
  std::int64_t trial_id = 0;
  Index n = 0;
  Index T = 0;
  double coupling_error = 0.0;
  std::vector<double> step_error;
  double x_norm = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  Matrix Bn;
  Matrix Sn;
  double lf = 0.0;
  double lg = 0.0;
  double omega_21 = 0.0;
  std::vector<Index> fallback_steps;

  double bound4(double r) const { return bound_thm4(lf, lg, omega_21, T, delta1, delta2, r, n); }
  bool exceeds(double r) const { return coupling_error > bound4(r); }
};

inline ErrorReport make_report(const CoupledRun& run, const SystemSpec& sys, const SeParams& params,
                               std::int64_t trial_id = 0) {
  ErrorReport rep;
  rep.trial_id = trial_id;
  rep.n = run.n;
  rep.T = run.T;
  const Matrix diff = run.X.columns() - run.Y.columns();
  rep.coupling_error = diff.norm();
  rep.step_error.resize(static_cast<std::size_t>(run.T));
  for (Index t = 0; t < run.T; ++t) rep.step_error[static_cast<std::size_t>(t)] = diff.col(t).norm();
  rep.x_norm = run.X.columns().norm();
  const auto bs = compute_Bn_Sn(run, params);
  rep.Bn = bs.Bn;
  rep.Sn = bs.Sn;
  rep.delta1 = delta1_from(run.FY, run.MY, run.GY, bs.Bn, params.Omega);
  rep.delta2 = delta2_from(bs.Sn, run.n);
  rep.lf = sys.lipschitz_f();
  rep.lg = sys.lipschitz_g();
  rep.omega_21 = two_one_norm(params.Omega.matrix());
  rep.fallback_steps = run.fallback_log;
  return rep;
}

struct ExceedanceRow {
  double r = 0.0;
  std::size_t trials = 0;
  std::size_t exceed = 0;
  double frequency = 0.0;
  stats::Interval wilson;
  /// 3 e^{-r}.
  double ceiling = 0.0;
  /// The Wilson interval reaches down to the ceiling.
  bool consistent = true;
};

inline std::vector<ExceedanceRow> tail_frequency(const std::vector<ErrorReport>& reports,
                                                 const std::vector<double>& r_grid, double confidence = 0.99) {
  if (reports.empty()) throw InvalidArgument("tail_frequency: no reports");
  std::vector<ExceedanceRow> rows;
  for (double r : r_grid) {
    ExceedanceRow row;
    row.r = r;
    row.trials = reports.size();
    for (const auto& rep : reports) row.exceed += rep.exceeds(r) ? 1 : 0;
    row.frequency = static_cast<double>(row.exceed) / static_cast<double>(row.trials);
    row.wilson = stats::wilson_interval(row.exceed, row.trials, confidence);
    row.ceiling = 3.0 * std::exp(-r);
    row.consistent = row.wilson.lower <= row.ceiling;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gfomc
