#pragma once

// Coupling of a GFOM run with its comparison process. Both share the same
// matrix A: the comparison noise z_t is built from A q_t, where q_t is a
// Gram-Schmidt frame of f_t(y_{<t}), plus a small independent T x T GOE block
// A' that completes the law of z to N(0, I).

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfomc/dynamics.hpp"
#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/rng.hpp"
#include "gfomc/state_evolution.hpp"

namespace gfomc {

/// Fixed ordered basis used when f_t(y_{<t}) falls in the span of the frame.
class OrderedBasis {
 public:
  /// Standard basis e_1, ..., e_n.
  static OrderedBasis standard(Index n) {
    if (n < 1) throw InvalidArgument("OrderedBasis: n must be >= 1");
    OrderedBasis b;
    b.n_ = n;
    return b;
  }

  /// Columns of `v`, which must be square and invertible.
  static OrderedBasis explicit_basis(Matrix v) {
    if (v.rows() != v.cols() || v.rows() < 1) throw DimensionMismatch("OrderedBasis: basis must be n x n");
    Eigen::FullPivLU<Matrix> lu(v);
    if (lu.rank() != v.rows()) throw InvalidArgument("OrderedBasis: vectors do not span R^n");
    OrderedBasis b;
    b.n_ = v.rows();
    b.vectors_ = std::move(v);
    return b;
  }

  Index n() const noexcept { return n_; }

  Vector vector(Index k) const {
    if (vectors_) return vectors_->col(k);
    return Vector::Unit(n_, k);
  }

 private:
  Index n_ = 0;
  std::optional<Matrix> vectors_;
};

struct GramSchmidtStep {
  Vector q;
  bool used_fallback = false;
  /// Index of the basis vector used, or -1.
  Index fallback_index = -1;
};

namespace detail {

/// Removes the components along the first `count` columns of Q (norm √n each),
/// with one repeat pass when the first leaves visible residue.
inline Vector project_out(const Matrix& q, Index count, Vector v) {
  const double n = static_cast<double>(q.rows());
  if (count == 0) return v;
  auto block = q.leftCols(count);
  v -= block * (block.transpose() * v / n);
  const Vector again = block.transpose() * v / n;
  if (again.cwiseAbs().maxCoeff() * std::sqrt(n) > 1e-10 * std::max(v.norm(), 1e-300)) v -= block * again;
  return v;
}

}  // namespace detail

/// Next frame vector from candidate `v` given the first `count` columns of `q`.
/// Falls back to the first basis vector outside span(q_{<t}) when v is
/// (numerically) in that span.
inline GramSchmidtStep gram_schmidt_step(const Matrix& q, Index count, const Vector& v, const OrderedBasis& basis,
                                         double tol = 1e-8) {
  const Index n = q.rows();
  if (count >= n) throw BasisExhausted("gram_schmidt_step: frame already spans R^n");
  if (v.size() != n || basis.n() != n) throw DimensionMismatch("gram_schmidt_step: vector length differs from n");
  const double root_n = std::sqrt(static_cast<double>(n));
  const double vnorm = v.norm();
  GramSchmidtStep out;
  if (vnorm > 0.0) {
    Vector r = detail::project_out(q, count, v);
    const double rnorm = r.norm();
    if (rnorm > tol * vnorm) {
      out.q = r * (root_n / rnorm);
      return out;
    }
  }
  for (Index k = 0; k < n; ++k) {
    const Vector e = basis.vector(k);
    Vector r = detail::project_out(q, count, e);
    const double rnorm = r.norm();
    if (rnorm > tol * e.norm()) {
      out.q = r * (root_n / rnorm);
      out.used_fallback = true;
      out.fallback_index = k;
      return out;
    }
  }
  throw BasisExhausted("gram_schmidt_step: no basis vector outside the current span");
}

struct CoupledRun {
  Index n = 0;
  Index T = 0;
  std::shared_ptr<const SymMatrix> A;
  SymMatrix A_prime;
  Matrix Q;
  Matrix Z;
  Matrix W;
  Trajectory Y{1, 1};
  Trajectory X{1, 1};
  /// f_t(y_{<t}), m_t(y_{<t}) and g_t(y_{<t}) as n x T matrices.
  Matrix FY;
  Matrix MY;
  Matrix GY;
  /// (1/n) Q^T F(Y); F(Y) = Q R.
  Matrix R;
  std::vector<Index> fallback_log;
};

/// Runs the coupling with a given A and T x T block A'.
inline CoupledRun build_coupling(const SystemSpec& sys, const SeParams& params, const OrderedBasis& basis,
                                 std::shared_ptr<const SymMatrix> a, SymMatrix a_prime) {
  sys.validate();
  const Index n = sys.n, T = sys.T;
  if (params.T != T || static_cast<Index>(params.m.size()) != T || params.Omega.size() != T)
    throw DimensionMismatch("build_coupling: parameters and system disagree on T");
  if (!a || a->n() != n) throw DimensionMismatch("build_coupling: A is not n x n");
  if (a_prime.n() != T) throw DimensionMismatch("build_coupling: A' is not T x T");
  if (basis.n() != n) throw DimensionMismatch("build_coupling: basis dimension differs from n");

  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix& am = a->matrix();
  const Matrix& ap = a_prime.matrix();
  const Matrix& omega = params.Omega.matrix();

  CoupledRun run;
  run.n = n;
  run.T = T;
  run.Q = Matrix::Zero(n, T);
  run.Z = Matrix::Zero(n, T);
  run.W = Matrix::Zero(n, T);
  run.Y = Trajectory(n, T);
  run.FY = Matrix::Zero(n, T);
  run.MY = Matrix::Zero(n, T);
  run.GY = Matrix::Zero(n, T);

  for (Index t = 0; t < T; ++t) {
    const Matrix& y = run.Y.columns();
    run.FY.col(t) = sys.f[t].eval(y, t);
    run.MY.col(t) = params.m[t].eval(y, t);
    run.GY.col(t) = sys.g[t].eval(y, t);

    auto step = gram_schmidt_step(run.Q, t, run.FY.col(t), basis);
    if (step.used_fallback) run.fallback_log.push_back(t);
    run.Q.col(t) = step.q;

    const Vector aq = am * step.q;
    Vector z = aq;
    z += 0.5 * (ap(t, t) - step.q.dot(aq) * inv_n) * step.q;
    for (Index s = 0; s < t; ++s) z += (ap(s, t) - run.Q.col(s).dot(aq) * inv_n) * run.Q.col(s);
    if (!z.allFinite()) throw NonFinite("build_coupling: non-finite z at step " + std::to_string(t), t);
    run.Z.col(t) = z;

    Vector w = Vector::Zero(n);
    for (Index s = 0; s <= t; ++s)
      if (omega(s, t) != 0.0) w += omega(s, t) * run.Z.col(s);
    run.W.col(t) = w;
    run.Y.push(run.MY.col(t) + w);
  }
  run.R = run.Q.transpose() * run.FY * inv_n;
  run.R.triangularView<Eigen::StrictlyLower>().setZero();
  run.A = std::move(a);
  run.A_prime = std::move(a_prime);
  run.X = run_gfom(sys, *run.A);
  return run;
}

/// Samples A ~ GOE(n) and A' (T x T GOE(n) block) from substreams 1 and 2.
inline CoupledRun build_coupling(const SystemSpec& sys, const SeParams& params, const OrderedBasis& basis,
                                 const RngStream& rng) {
  RngStream ra = rng.substream(1);
  RngStream rb = rng.substream(2);
  auto a = std::make_shared<const SymMatrix>(sample_goe(sys.n, ra));
  return build_coupling(sys, params, basis, std::move(a), sample_goe_block(sys.T, sys.n, rb));
}

inline CoupledRun build_coupling(const SystemSpec& sys, const SeParams& params, const RngStream& rng) {
  return build_coupling(sys, params, OrderedBasis::standard(sys.n), rng);
}

/// max over t <= r of
///   ‖z_t - (A q_t - (1/n) Σ_{s<=r} <z_s, q_t> q_s + Σ_{s<=r} A'_{st} q_s)‖ / √n.
/// `r` is a zero-based step index.
inline double verify_identity(const CoupledRun& run, Index r) {
  if (r < 0 || r >= run.T) throw InvalidArgument("verify_identity: step index out of range");
  const double n = static_cast<double>(run.n);
  const auto q = run.Q.leftCols(r + 1);
  const auto z = run.Z.leftCols(r + 1);
  const Matrix zq = z.transpose() * q / n;  // (s, t) = <z_s, q_t> / n
  const Matrix& ap = run.A_prime.matrix();
  double worst = 0.0;
  for (Index t = 0; t <= r; ++t) {
    Vector expected = run.A->matrix() * run.Q.col(t);
    for (Index s = 0; s <= r; ++s) expected += (ap(s, t) - zq(s, t)) * run.Q.col(s);
    worst = std::max(worst, (run.Z.col(t) - expected).norm() / std::sqrt(n));
  }
  return worst;
}

/// Fault injection: flips the sign of the largest off-diagonal pair of A'
/// (or of the diagonal entry when T = 1) without rebuilding the run.
inline void corrupt_a_prime(CoupledRun& run) {
  Matrix ap = run.A_prime.matrix();
  Index bi = 0, bj = 0;
  double best = -1.0;
  for (Index j = 0; j < ap.cols(); ++j)
    for (Index i = 0; i < j; ++i)
      if (std::abs(ap(i, j)) > best) {
        best = std::abs(ap(i, j));
        bi = i;
        bj = j;
      }
  if (best < 0.0) {
    ap(0, 0) = -ap(0, 0);
  } else {
    ap(bi, bj) = -ap(bi, bj);
    ap(bj, bi) = -ap(bj, bi);
  }
  run.A_prime = SymMatrix(std::move(ap));
}

}  // namespace gfomc
