#pragma once

// Brute-force Gaussian conditioning for small instances. Used as a reference
// for the conditional structure behind the coupling construction.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/wasserstein.hpp"

namespace gfomc {

/// θ | ξ for a joint Gaussian over (θ, ξ), with θ the leading block.
struct ConditionalMap {
  Vector mean_theta;
  Vector mean_xi;
  Matrix gain;  // C_θξ C_ξξ^+
  Matrix cov;   // C_θθ - C_θξ C_ξξ^+ C_ξθ

  GaussianLaw operator()(const Vector& xi) const {
    if (xi.size() != mean_xi.size()) throw DimensionMismatch("ConditionalMap: observation has the wrong size");
    return GaussianLaw(mean_theta + gain * (xi - mean_xi), cov);
  }
};

inline ConditionalMap cond_gaussian(const GaussianLaw& joint, Index split) {
  const Index d = joint.dim();
  if (split < 0 || split > d) throw InvalidArgument("cond_gaussian: split outside [0, dim]");
  const Index m = d - split;
  const Matrix& c = joint.cov;
  ConditionalMap out;
  out.mean_theta = joint.mean.head(split);
  out.mean_xi = joint.mean.tail(m);
  // Work with a square-root factor C = L L^T. Conditioning through the rows of
  // L keeps the cancellation at the scale of L instead of C.
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  const Vector ev = es.eigenvalues();
  const double top = d > 0 ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  std::vector<Index> keep;
  for (Index i = 0; i < d; ++i)
    if (ev(i) > 1e-12 * top) keep.push_back(i);
  Matrix l(d, static_cast<Index>(keep.size()));
  for (Index k = 0; k < l.cols(); ++k) l.col(k) = es.eigenvectors().col(keep[k]) * std::sqrt(ev(keep[k]));
  const Matrix l_t = l.topRows(split), l_x = l.bottomRows(m);
  const Matrix l_x_pinv = m > 0 && l.cols() > 0 ? pinv(l_x) : Matrix::Zero(l.cols(), m);
  out.gain = l_t * l_x_pinv;
  const Matrix resid = l_t - (l_t * l_x_pinv) * l_x;
  Matrix cov = resid * resid.transpose();
  cov = (0.5 * (cov + cov.transpose())).eval();
  out.cov = std::move(cov);
  return out;
}

/// ξ_t = F_t(ξ_{<t}) θ + g_t(ξ_{<t}) with θ ~ N(0, I_N).
struct AdaptedLinearSystem {
  using History = std::vector<Vector>;
  Index N = 0;
  Index T = 0;
  std::vector<std::function<Matrix(const History&)>> F_fns;
  std::vector<std::function<Vector(const History&)>> g_fns;

  void validate() const {
    if (N < 1 || T < 1) throw InvalidArgument("AdaptedLinearSystem: N and T must be >= 1");
    if (static_cast<Index>(F_fns.size()) != T || static_cast<Index>(g_fns.size()) != T)
      throw DimensionMismatch("AdaptedLinearSystem: need T maps for F and g");
  }

  History simulate(const Vector& theta) const {
    validate();
    if (theta.size() != N) throw DimensionMismatch("AdaptedLinearSystem: theta has the wrong size");
    History xi;
    for (Index t = 0; t < T; ++t) {
      const History prefix = xi;
      xi.push_back(F_fns[t](prefix) * theta + g_fns[t](prefix));
    }
    return xi;
  }
};

struct StepConditional {
  /// θ | ξ_{<t}.
  Vector theta_mean;
  Matrix theta_cov;
  /// ξ_t | ξ_{<t}.
  Vector xi_mean;
  Matrix xi_cov;
  /// cov(θ, ξ_t | ξ_{<t}).
  Matrix cross;
};

/// (F_{<t}^+ F_{<t}) + F̄^+ F̄ - F_{≤t}^+ F_{≤t}, with F̄ = F_t (I - F_{<t}^+ F_{<t}).
/// Returns the max-abs entry of the difference.
inline double projection_identity_residual(const Matrix& f_prev, const Matrix& f_t) {
  const Index N = f_t.cols();
  Matrix f_all(f_prev.rows() + f_t.rows(), N);
  f_all << f_prev, f_t;
  // Rank decisions use the scale of the stacked rows, so a block of F̄ that is
  // pure cancellation residue counts as zero.
  const double floor = 1e-10 * operator_norm(f_all);
  const Matrix p_prev = f_prev.rows() > 0 ? Matrix(pinv(f_prev, -1.0, floor) * f_prev) : Matrix::Zero(N, N);
  const Matrix f_bar = f_t * (Matrix::Identity(N, N) - p_prev);
  const Matrix diff = p_prev + pinv(f_bar, -1.0, floor) * f_bar - pinv(f_all, -1.0, floor) * f_all;
  return diff.cwiseAbs().maxCoeff();
}

inline std::vector<StepConditional> recursive_conditionals(const AdaptedLinearSystem& sys,
                                                           const AdaptedLinearSystem::History& xi,
                                                           double tol = 1e-8) {
  sys.validate();
  if (static_cast<Index>(xi.size()) != sys.T) throw DimensionMismatch("recursive_conditionals: need T observations");
  const Index N = sys.N;
  Matrix f_prev(0, N);
  Vector resid_prev(0);
  std::vector<StepConditional> out;
  AdaptedLinearSystem::History prefix;
  for (Index t = 0; t < sys.T; ++t) {
    const Matrix ft = sys.F_fns[t](prefix);
    const Vector gt = sys.g_fns[t](prefix);
    if (ft.cols() != N || gt.size() != ft.rows() || xi[t].size() != ft.rows())
      throw DimensionMismatch("recursive_conditionals: step " + std::to_string(t) + " has inconsistent shapes");

    StepConditional step;
    const Matrix p_prev = f_prev.rows() > 0 ? Matrix(pinv(f_prev)) : Matrix::Zero(N, 0);
    const Matrix proj = p_prev * f_prev;
    const Matrix resid_cov = Matrix::Identity(N, N) - proj;
    step.theta_mean = p_prev * resid_prev;
    step.theta_cov = 0.5 * (resid_cov + resid_cov.transpose());
    step.xi_mean = ft * step.theta_mean + gt;
    step.cross = step.theta_cov * ft.transpose();
    const Matrix xc = ft * step.theta_cov * ft.transpose();
    step.xi_cov = 0.5 * (xc + xc.transpose());
    out.push_back(std::move(step));

    Matrix f_next(f_prev.rows() + ft.rows(), N);
    f_next << f_prev, ft;
    Vector r_next(resid_prev.size() + gt.size());
    r_next << resid_prev, xi[t] - gt;
    const Vector leftover = r_next - f_next * (pinv(f_next) * r_next);
    if (leftover.norm() > tol * std::max(r_next.norm(), 1e-300) && leftover.norm() > 1e-300)
      throw InconsistentRealization("recursive_conditionals: observation " + std::to_string(t) +
                                    " is outside the column space of F");
    f_prev = std::move(f_next);
    resid_prev = std::move(r_next);
    prefix.push_back(xi[t]);
  }
  return out;
}


/// Non-adaptive instance: constant F_t (rows_per_step x N) and g_t. With
/// `rank_deficient`, some later blocks repeat rows of earlier ones.
inline AdaptedLinearSystem random_constant_system(Index N, Index T, Index rows_per_step, bool rank_deficient,
                                                  RngStream& rng) {
  AdaptedLinearSystem sys;
  sys.N = N;
  sys.T = T;
  std::vector<Matrix> fs;
  for (Index t = 0; t < T; ++t) {
    Matrix f(rows_per_step, N);
    for (Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    if (rank_deficient && t > 0) f.row(0) = fs[0].row(0);
    fs.push_back(f);
    Vector g(rows_per_step);
    for (Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
    sys.F_fns.push_back([f](const AdaptedLinearSystem::History&) { return f; });
    sys.g_fns.push_back([g](const AdaptedLinearSystem::History&) { return g; });
  }
  return sys;
}

/// Joint law of (θ, ξ_1, ..., ξ_T) for a non-adaptive system.
inline GaussianLaw assembled_joint(const AdaptedLinearSystem& sys) {
  sys.validate();
  std::vector<Matrix> fs;
  std::vector<Vector> gs;
  Index rows = 0;
  for (Index t = 0; t < sys.T; ++t) {
    fs.push_back(sys.F_fns[t]({}));
    gs.push_back(sys.g_fns[t]({}));
    rows += fs.back().rows();
  }
  Matrix f(rows, sys.N);
  Vector g(rows);
  Index at = 0;
  for (Index t = 0; t < sys.T; ++t) {
    f.middleRows(at, fs[t].rows()) = fs[t];
    g.segment(at, gs[t].size()) = gs[t];
    at += fs[t].rows();
  }
  const Index d = sys.N + rows;
  Matrix cov(d, d);
  cov << Matrix::Identity(sys.N, sys.N), f.transpose(), f, f * f.transpose();
  Vector mean(d);
  mean << Vector::Zero(sys.N), g;
  return GaussianLaw(std::move(mean), std::move(cov));
}

/// Largest discrepancy between recursive_conditionals and conditioning the
/// assembled joint law directly, over all steps.
inline double joint_assembly_discrepancy(const AdaptedLinearSystem& sys, const AdaptedLinearSystem::History& xi) {
  const auto steps = recursive_conditionals(sys, xi);
  const GaussianLaw joint = assembled_joint(sys);
  const Index N = sys.N;
  double worst = 0.0;
  Index observed = 0;
  for (Index t = 0; t < sys.T; ++t) {
    const Index rows_t = xi[t].size();
    // Marginal of (θ, ξ_{<t}, ξ_t) reordered as ((θ, ξ_t), ξ_{<t}).
    std::vector<Index> idx;
    for (Index i = 0; i < N; ++i) idx.push_back(i);
    for (Index i = 0; i < rows_t; ++i) idx.push_back(N + observed + i);
    const Index lead = static_cast<Index>(idx.size());
    for (Index i = 0; i < observed; ++i) idx.push_back(N + i);
    const Index d = static_cast<Index>(idx.size());
    Vector mean(d);
    Matrix cov(d, d);
    for (Index i = 0; i < d; ++i) {
      mean(i) = joint.mean(idx[i]);
      for (Index j = 0; j < d; ++j) cov(i, j) = joint.cov(idx[i], idx[j]);
    }
    const auto cmap = cond_gaussian(GaussianLaw(mean, cov), lead);
    Vector obs(observed);
    for (Index s = 0, at = 0; s < t; ++s) {
      obs.segment(at, xi[s].size()) = xi[s];
      at += xi[s].size();
    }
    const GaussianLaw post = cmap(obs);
    const auto& st = steps[static_cast<std::size_t>(t)];
    worst = std::max(worst, (post.mean.head(N) - st.theta_mean).cwiseAbs().maxCoeff());
    worst = std::max(worst, (post.mean.tail(rows_t) - st.xi_mean).cwiseAbs().maxCoeff());
    worst = std::max(worst, (post.cov.topLeftCorner(N, N) - st.theta_cov).cwiseAbs().maxCoeff());
    worst = std::max(worst, (post.cov.topRightCorner(N, rows_t) - st.cross).cwiseAbs().maxCoeff());
    worst = std::max(worst, (post.cov.bottomRightCorner(rows_t, rows_t) - st.xi_cov).cwiseAbs().maxCoeff());
    observed += rows_t;
  }
  return worst;
}

}  // namespace gfomc
