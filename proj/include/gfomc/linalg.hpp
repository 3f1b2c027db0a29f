#pragma once

// Dense matrix primitives: GOE / Gaussian sampling, Cholesky with a
// semidefinite path, the norms used by the error bounds, pseudo-inverse and
// PSD matrix square roots.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "gfomc/errors.hpp"
#include "gfomc/rng.hpp"

namespace gfomc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Symmetric n x n matrix. Symmetry is exact: entries are mirrored on write.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Wraps `m`, which must be square and exactly symmetric.
  explicit SymMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionMismatch("SymMatrix: matrix is not square");
    for (Index j = 0; j < m_.cols(); ++j)
      for (Index i = j + 1; i < m_.rows(); ++i)
        if (m_(i, j) != m_(j, i)) throw InvalidArgument("SymMatrix: matrix is not symmetric");
  }

  /// Builds from the upper triangle of `m`, mirroring it into the lower one.
  static SymMatrix from_upper(Matrix m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("SymMatrix: matrix is not square");
    m.triangularView<Eigen::StrictlyLower>() = m.transpose().triangularView<Eigen::StrictlyLower>();
    SymMatrix out;
    out.m_ = std::move(m);
    return out;
  }

  Index n() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  /// Sets entries (i, j) and (j, i).
  void set(Index i, Index j, double value) {
    m_(i, j) = value;
    m_(j, i) = value;
  }

  Vector operator*(const Vector& v) const { return m_ * v; }

 private:
  Matrix m_;
};

/// T x T upper triangular matrix with nonnegative diagonal.
class UpperTriMatrix {
 public:
  UpperTriMatrix() = default;

  explicit UpperTriMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionMismatch("UpperTriMatrix: matrix is not square");
    for (Index j = 0; j < m_.cols(); ++j) {
      if (!(m_(j, j) >= 0.0)) throw InvalidArgument("UpperTriMatrix: negative diagonal entry");
      for (Index i = j + 1; i < m_.rows(); ++i)
        if (m_(i, j) != 0.0) throw InvalidArgument("UpperTriMatrix: nonzero entry below the diagonal");
    }
  }

  static UpperTriMatrix identity(Index T) { return UpperTriMatrix(Matrix::Identity(T, T)); }

  Index size() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  /// Ω^T Ω.
  Matrix gram() const { return m_.transpose() * m_; }

 private:
  Matrix m_;
};

// ---------------------------------------------------------------------------
// Sampling

/// GOE(n): N(0, 2/n) diagonal, N(0, 1/n) off-diagonal. Entries are drawn
/// row by row over the upper triangle.
inline SymMatrix sample_goe(Index n, RngStream& rng) {
  if (n < 1) throw InvalidArgument("sample_goe: n must be >= 1");
  Matrix m(n, n);
  const double off = 1.0 / std::sqrt(static_cast<double>(n));
  const double diag = std::sqrt(2.0) * off;
  for (Index i = 0; i < n; ++i) {
    m(i, i) = diag * rng.normal();
    for (Index j = i + 1; j < n; ++j) m(i, j) = off * rng.normal();
  }
  return SymMatrix::from_upper(std::move(m));
}

/// Leading T x T block of a GOE(n) matrix, sampled without the rest.
inline SymMatrix sample_goe_block(Index T, Index n, RngStream& rng) {
  if (T < 1 || n < 1) throw InvalidArgument("sample_goe_block: dimensions must be >= 1");
  Matrix m(T, T);
  const double off = 1.0 / std::sqrt(static_cast<double>(n));
  const double diag = std::sqrt(2.0) * off;
  for (Index i = 0; i < T; ++i) {
    m(i, i) = diag * rng.normal();
    for (Index j = i + 1; j < T; ++j) m(i, j) = off * rng.normal();
  }
  return SymMatrix::from_upper(std::move(m));
}

/// n x T matrix of i.i.d. N(0, 1) entries, filled column by column, so the
/// first k columns do not depend on T.
inline Matrix sample_gaussian_matrix(Index n, Index T, RngStream& rng) {
  if (n < 1 || T < 1) throw InvalidArgument("sample_gaussian_matrix: dimensions must be >= 1");
  Matrix z(n, T);
  rng.fill_normal(std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
  return z;
}

// ---------------------------------------------------------------------------
// Spectral helpers

inline Vector symmetric_eigenvalues(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// PSD square root via eigendecomposition; eigenvalues below
/// `clip_rel * trace` (in magnitude) and all negative ones are set to zero.
inline Matrix psd_sqrt(const Matrix& s, double clip_rel = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  Vector ev = es.eigenvalues();
  const double floor = clip_rel * std::max(std::abs(s.trace()), std::numeric_limits<double>::min());
  for (Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) <= floor ? 0.0 : std::sqrt(ev(i));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Condition number of a symmetric PSD matrix (inf when singular).
inline double condition_number(const Matrix& s) {
  const Vector ev = symmetric_eigenvalues(s);
  if (ev(0) <= 0.0) return std::numeric_limits<double>::infinity();
  return ev(ev.size() - 1) / ev(0);
}

// ---------------------------------------------------------------------------
// Cholesky

struct CholeskyOptions {
  /// Added to the diagonal before factoring (0 by default).
  double jitter = 0.0;
  /// PSD acceptance: min eigenvalue >= -tol_psd_rel * trace / T.
  double tol_psd_rel = 1e-10;
  /// Min eigenvalue below this (relative to trace / T) flags the factor as singular.
  double singular_rel = 1e-10;
};

struct CholeskyResult {
  UpperTriMatrix factor;
  bool singular = false;
  double min_eigenvalue = 0.0;
};

/// Upper Cholesky factor Ω with Ω^T Ω = S and nonnegative diagonal.
/// Semidefinite inputs take the rank-revealing path: a pivot that vanishes
/// (up to round-off) gets a zero row.
inline CholeskyResult cholesky_upper(const Matrix& s_in, const CholeskyOptions& opts = {}) {
  if (s_in.rows() != s_in.cols()) throw DimensionMismatch("cholesky_upper: matrix is not square");
  const Index T = s_in.rows();
  if (T == 0) return {UpperTriMatrix(Matrix(0, 0)), false, 0.0};
  if (!s_in.allFinite()) throw InvalidArgument("cholesky_upper: non-finite entries");
  if ((s_in - s_in.transpose()).norm() > 1e-12 * s_in.norm())
    throw InvalidArgument("cholesky_upper: matrix is not symmetric");

  Matrix s = 0.5 * (s_in + s_in.transpose());
  if (opts.jitter != 0.0) s.diagonal().array() += opts.jitter;

  const double scale = std::max(s.trace() / static_cast<double>(T), 0.0);
  const double min_ev = symmetric_eigenvalues(s)(0);
  const double tol_psd = opts.tol_psd_rel * scale;
  if (min_ev < -tol_psd) {
    throw NotPositiveSemidefinite("cholesky_upper: minimum eigenvalue " + std::to_string(min_ev) +
                                      " below -tol_psd = " + std::to_string(-tol_psd),
                                  min_ev);
  }

  Matrix u = Matrix::Zero(T, T);
  // Pivots below this are treated as exact zeros of a semidefinite matrix.
  const double pivot_tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300);
  for (Index j = 0; j < T; ++j) {
    double d = s(j, j);
    for (Index k = 0; k < j; ++k) d -= u(k, j) * u(k, j);
    if (d <= pivot_tol) continue;  // zero row
    const double ujj = std::sqrt(d);
    u(j, j) = ujj;
    for (Index c = j + 1; c < T; ++c) {
      double v = s(j, c);
      for (Index k = 0; k < j; ++k) v -= u(k, j) * u(k, c);
      u(j, c) = v / ujj;
    }
  }
  return {UpperTriMatrix(std::move(u)), min_ev < opts.singular_rel * scale, min_ev};
}

// ---------------------------------------------------------------------------
// Norms

/// ℓ2→ℓ1 norm: sum of the Euclidean column norms.
inline double two_one_norm(const Matrix& m) {
  double total = 0.0;
  for (Index j = 0; j < m.cols(); ++j) total += m.col(j).norm();
  return total;
}

struct PowerIterationOptions {
  double rel_tol = 1e-10;
  /// 0 selects ceil(10 * ln(n)).
  int max_iterations = 0;
};

/// Largest singular value by power iteration on M^T M from a fixed start vector.
inline double operator_norm_power(const Matrix& m, const PowerIterationOptions& opts = {}) {
  const Index cols = m.cols();
  if (m.size() == 0) return 0.0;
  const Index dim = std::max(m.rows(), m.cols());
  const int max_it = opts.max_iterations > 0
                         ? opts.max_iterations
                         : static_cast<int>(std::ceil(10.0 * std::log(static_cast<double>(std::max<Index>(dim, 2)))));
  RngStream start(0x5EEDF00DULL, static_cast<std::uint64_t>(cols));
  Vector v(cols);
  start.fill_normal(std::span<double>(v.data(), static_cast<std::size_t>(cols)));
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < max_it; ++it) {
    const Vector mv = m * v;
    Vector w = m.transpose() * mv;
    const double lambda = w.norm();  // ≈ σ_max² once v aligns
    if (lambda == 0.0) return 0.0;
    const double next = std::sqrt(lambda);
    w /= lambda;
    v = std::move(w);
    if (it > 0 && std::abs(next - estimate) <= opts.rel_tol * next) return next;
    estimate = next;
  }
  return estimate;
}

/// Operator (spectral) norm: exact SVD when the small side is at most
/// `svd_cutoff`, power iteration otherwise.
inline double operator_norm(const Matrix& m, Index svd_cutoff = 64) {
  if (m.size() == 0) return 0.0;
  if (std::min(m.rows(), m.cols()) <= svd_cutoff) {
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
  }
  return operator_norm_power(m);
}

struct Norms {
  double frobenius = 0.0;
  double op = 0.0;
  double two_one = 0.0;
};

inline Norms norms(const Matrix& m) { return {m.norm(), operator_norm(m), two_one_norm(m)}; }

// ---------------------------------------------------------------------------
// Pseudo-inverse

/// Moore-Penrose pseudo-inverse. Singular values at or below
/// rcond * σ_max are treated as zero; rcond < 0 selects max(rows, cols) * eps.
/// Singular values at or below max(rcond * σ_max, abs_floor) are treated as zero.
inline Matrix pinv(const Matrix& m, double rcond = -1.0, double abs_floor = 0.0) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double rc = rcond < 0.0 ? static_cast<double>(std::max(m.rows(), m.cols())) *
                                      std::numeric_limits<double>::epsilon()
                                : rcond;
  const double cutoff = std::max(rc * (sv.size() > 0 ? sv(0) : 0.0), abs_floor);
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Largest relative residual among the four Penrose identities.
inline double penrose_residual(const Matrix& m, const Matrix& p) {
  const double scale_m = std::max(m.norm(), 1e-300);
  const double scale_p = std::max(p.norm(), 1e-300);
  const Matrix mp = m * p;
  const Matrix pm = p * m;
  double r = (mp * m - m).norm() / scale_m;
  r = std::max(r, (pm * p - p).norm() / scale_p);
  r = std::max(r, (mp - mp.transpose()).norm() / std::max(mp.norm(), 1e-300));
  r = std::max(r, (pm - pm.transpose()).norm() / std::max(pm.norm(), 1e-300));
  return r;
}

/// Inverse of I - L for strictly upper triangular L.
inline Matrix inverse_unit_upper(const Matrix& strictly_upper) {
  const Index T = strictly_upper.rows();
  const Matrix i_minus = Matrix::Identity(T, T) - strictly_upper;
  return i_minus.triangularView<Eigen::Upper>().solve(Matrix::Identity(T, T));
}

inline bool is_strictly_upper(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j; i < m.rows(); ++i)
      if (m(i, j) != 0.0) return false;
  return true;
}

}  // namespace gfomc
