#pragma once

// State evolution: builds the comparison-process parameters (m, Σ, Ω, b)
// from the GFOM functions (f, g).
//
// Three routes are provided:
//   * se_monte_carlo      moment form, expectations estimated over K replicates
//   * se_linear_closed_form  constant f / linear g, exact
//   * b_stein             Jacobian (Gaussian integration by parts) form of b,
//                         used as an independent cross-check of the moment form
//
// The debiasing vector for step t is b(0..t-1, t) = Σ_{<t}^+ c with
// c_r = (1/n) E<y_r - m_r(y_{<r}), f_t(y_{<t})>, r < t.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gfomc/dynamics.hpp"
#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"
#include "gfomc/parallel.hpp"
#include "gfomc/rng.hpp"

namespace gfomc {

struct McMeta {
  /// "monte_carlo", "closed_form" or "explicit".
  std::string source = "explicit";
  Index K = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  /// Standard error of each Σ entry (zero for exact sources).
  Matrix sigma_stderr;
  /// Standard error of each b entry, delta method through Σ^+.
  Matrix b_stderr;
  bool near_degenerate = false;
  std::vector<Index> degenerate_steps;
  bool singular_omega = false;
};

struct SeParams {
  Index T = 0;
  Matrix Sigma;
  UpperTriMatrix Omega;
  /// b(s, t) for s < t; zero on and below the diagonal.
  Matrix b;
  std::vector<FunctionSpec> m;
  McMeta meta;
};

/// Constant f-columns, g_t = Σ_s Λ(s,t) x_s, m_t = Σ_s Γ(s,t) y_s.
struct LinearCaseSpec {
  Matrix F;
  Matrix Lambda;
  Matrix Gamma;

  Index n() const noexcept { return F.rows(); }
  Index T() const noexcept { return F.cols(); }

  void validate() const {
    if (F.cols() < 1 || F.rows() < 1) throw InvalidArgument("LinearCaseSpec: empty F");
    if (Lambda.rows() != T() || Lambda.cols() != T() || Gamma.rows() != T() || Gamma.cols() != T())
      throw DimensionMismatch("LinearCaseSpec: Lambda and Gamma must be T x T");
    if (!is_strictly_upper(Lambda)) throw InvalidArgument("LinearCaseSpec: Lambda must be strictly upper triangular");
    if (!is_strictly_upper(Gamma)) throw InvalidArgument("LinearCaseSpec: Gamma must be strictly upper triangular");
  }
};

inline std::vector<FunctionSpec> linear_specs_from_columns(const Matrix& coeffs) {
  std::vector<FunctionSpec> out;
  out.reserve(coeffs.cols());
  for (Index t = 0; t < coeffs.cols(); ++t) {
    std::vector<Term> terms;
    for (Index s = 0; s < t; ++s)
      if (coeffs(s, t) != 0.0) terms.push_back({s, coeffs(s, t)});
    out.push_back(FunctionSpec::linear(std::move(terms)));
  }
  return out;
}

/// The GFOM described by a linear-case spec.
inline SystemSpec to_system(const LinearCaseSpec& spec) {
  spec.validate();
  SystemSpec sys{spec.n(), spec.T(), {}, linear_specs_from_columns(spec.Lambda)};
  for (Index t = 0; t < spec.T(); ++t) sys.f.push_back(FunctionSpec::constant(spec.F.col(t)));
  return sys;
}

/// Parameters supplied directly (Σ must pass the PSD tolerance).
inline SeParams make_params(Matrix sigma, std::vector<FunctionSpec> m, Matrix b = {}, std::string source = "explicit",
                            const CholeskyOptions& chol = {}) {
  const Index T = sigma.rows();
  if (sigma.cols() != T || static_cast<Index>(m.size()) != T)
    throw DimensionMismatch("make_params: Sigma must be T x T and m must have T entries");
  if (b.size() == 0) b = Matrix::Zero(T, T);
  if (b.rows() != T || b.cols() != T) throw DimensionMismatch("make_params: b must be T x T");
  auto chol_result = cholesky_upper(sigma, chol);
  SeParams p;
  p.T = T;
  p.Sigma = std::move(sigma);
  p.Omega = std::move(chol_result.factor);
  p.b = std::move(b);
  p.m = std::move(m);
  p.meta.source = std::move(source);
  p.meta.sigma_stderr = Matrix::Zero(T, T);
  p.meta.b_stderr = Matrix::Zero(T, T);
  p.meta.singular_omega = chol_result.singular;
  return p;
}

/// Copy of `p` with Σ scaled by `factor` (Ω by its square root); m and b unchanged.
inline SeParams scale_sigma(const SeParams& p, double factor) {
  if (!(factor > 0.0)) throw InvalidArgument("scale_sigma: factor must be positive");
  SeParams out = p;
  out.Sigma *= factor;
  out.Omega = UpperTriMatrix(p.Omega.matrix() * std::sqrt(factor));
  out.meta.sigma_stderr *= factor;
  return out;
}

/// Exact parameters for the linear case: b = 0, Σ = F^T F / n, m from Γ.
inline SeParams se_linear_closed_form(const LinearCaseSpec& spec) {
  spec.validate();
  Matrix sigma = spec.F.transpose() * spec.F / static_cast<double>(spec.n());
  sigma = (0.5 * (sigma + sigma.transpose())).eval();
  return make_params(std::move(sigma), linear_specs_from_columns(spec.Gamma), Matrix::Zero(spec.T(), spec.T()),
                     "closed_form");
}

struct SeOptions {
  int threads = 1;
  /// Diagonal jitter applied before the PSD check / Cholesky of Σ.
  double jitter = 0.0;
  /// Relative eigenvalue level below which Σ_{<t} counts as near-degenerate.
  double degenerate_rel = 1e-10;
};

namespace detail {

/// Simulates y_{<t} for one replicate: Z is n x t, Ω the leading t x t block.
inline Matrix simulate_prefix(const std::vector<FunctionSpec>& m, const Matrix& omega_block, const Matrix& z,
                              Matrix* w_out = nullptr) {
  const Index t = z.cols();
  Matrix w = z * omega_block.topLeftCorner(t, t).triangularView<Eigen::Upper>();
  Matrix y(z.rows(), t);
  for (Index r = 0; r < t; ++r) {
    y.col(r) = m[r].eval(y, r) + w.col(r);
    if (!y.col(r).allFinite()) throw NonFinite("state evolution replicate produced non-finite values", r);
  }
  if (w_out) *w_out = std::move(w);
  return y;
}

inline Matrix leading_omega(const Matrix& sigma, Index t, double jitter, bool* singular = nullptr) {
  CholeskyOptions opts;
  opts.jitter = jitter;
  CholeskyResult r;
  try {
    r = cholesky_upper(sigma.topLeftCorner(t, t), opts);
  } catch (const NotPositiveSemidefinite& e) {
    throw SigmaNotPsd(std::string("state evolution: Sigma estimate fails the PSD tolerance (") + e.what() + ")",
                      e.min_eigenvalue());
  }
  if (singular) *singular = r.singular;
  return r.factor.matrix();
}

struct SeRecursionResult {
  SeParams params;
  std::vector<FunctionSpec> g;
};

/// Shared recursion. In Onsager mode g_t is rebuilt as base_t - Σ b f_s so
/// that m_t = base_t; otherwise g is fixed and m_t = g_t + Σ b f_s.
inline SeRecursionResult se_recursion(Index n, const std::vector<FunctionSpec>& f,
                                      const std::vector<FunctionSpec>& g_in, bool onsager, Index K, RngStream rng,
                                      const SeOptions& opts) {
  const Index T = static_cast<Index>(f.size());
  if (K < 100) throw InvalidArgument("state evolution: K must be >= 100");
  if (T < 1) throw InvalidArgument("state evolution: T must be >= 1");
  if (static_cast<Index>(g_in.size()) != T) throw DimensionMismatch("state evolution: f and g sizes differ");
  if (!f[0].is_constant()) throw InvalidArgument("state evolution: f_1 must be constant");

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix sigma = Matrix::Zero(T, T);
  Matrix sigma_se = Matrix::Zero(T, T);
  Matrix b = Matrix::Zero(T, T);
  Matrix b_se = Matrix::Zero(T, T);
  std::vector<FunctionSpec> g = g_in;
  std::vector<FunctionSpec> m;
  m.reserve(T);

  McMeta meta;
  meta.source = "monte_carlo";
  meta.K = K;
  meta.seed = rng.seed();
  meta.stream = rng.stream_id();

  const Matrix empty(n, 0);
  const Vector f0 = f[0].eval(Matrix::Zero(n, 1), 0);
  sigma(0, 0) = f0.squaredNorm() * inv_n;
  if (onsager) {
    g[0] = g_in[0];
  }
  m.push_back(g[0]);

  for (Index t = 1; t < T; ++t) {
    const Matrix omega = leading_omega(sigma, t, opts.jitter);
    // Per replicate: [sigma(0..t) | c(0..t-1) | gram of f_{<t} (t*t)].
    const Index width = (t + 1) + t + t * t;
    std::vector<Vector> rows(static_cast<std::size_t>(K));
    parallel_for(static_cast<std::size_t>(K), opts.threads, [&](std::size_t k) {
      RngStream rk = rng.substream(k);
      const Matrix z = sample_gaussian_matrix(n, t, rk);
      Matrix w;
      const Matrix y = simulate_prefix(m, omega, z, &w);
      Matrix fy(n, t + 1);
      for (Index s = 0; s <= t; ++s) fy.col(s) = f[s].eval(y, s);
      Vector row(width);
      for (Index s = 0; s <= t; ++s) row(s) = fy.col(s).dot(fy.col(t)) * inv_n;
      for (Index r = 0; r < t; ++r) row(t + 1 + r) = w.col(r).dot(fy.col(t)) * inv_n;
      const Matrix gram = fy.leftCols(t).transpose() * fy.leftCols(t) * inv_n;
      row.tail(t * t) = Eigen::Map<const Vector>(gram.data(), t * t);
      rows[k] = std::move(row);
    });
    Vector mean = Vector::Zero(width);
    for (const auto& row : rows) mean += row;  // replicate order
    mean /= static_cast<double>(K);

    for (Index s = 0; s <= t; ++s) {
      double var = 0.0;
      for (const auto& row : rows) var += (row(s) - mean(s)) * (row(s) - mean(s));
      const double se = std::sqrt(var / static_cast<double>(K - 1) / static_cast<double>(K));
      sigma(s, t) = sigma(t, s) = mean(s);
      sigma_se(s, t) = sigma_se(t, s) = se;
    }

    const Matrix sigma_prev = sigma.topLeftCorner(t, t);
    const Vector ev = symmetric_eigenvalues(sigma_prev);
    if (ev(0) < opts.degenerate_rel * sigma_prev.trace() / static_cast<double>(t)) {
      meta.near_degenerate = true;
      meta.degenerate_steps.push_back(t);
    }
    const Matrix p = pinv(sigma_prev);
    const Vector c = mean.segment(t + 1, t);
    const Vector bt = p * c;
    b.col(t).head(t) = bt;

    // Delta-method influence of each replicate on b = Σ^+ c.
    Vector var = Vector::Zero(t);
    for (const auto& row : rows) {
      const Eigen::Map<const Matrix> gram(row.data() + (t + 1) + t, t, t);
      const Vector infl = p * (row.segment(t + 1, t) - gram * bt);
      var += infl.cwiseAbs2();
    }
    b_se.col(t).head(t) = (var / static_cast<double>(K - 1) / static_cast<double>(K)).cwiseSqrt();

    std::vector<std::pair<double, FunctionSpec>> parts;
    for (Index s = 0; s < t; ++s)
      if (bt(s) != 0.0) parts.emplace_back(bt(s), f[s]);
    if (onsager) {
      std::vector<std::pair<double, FunctionSpec>> gparts;
      gparts.emplace_back(1.0, g_in[t]);
      for (const auto& [w, spec] : parts) gparts.emplace_back(-w, spec);
      g[t] = FunctionSpec::composite(std::move(gparts));
      m.push_back(g_in[t]);
    } else if (parts.empty()) {
      m.push_back(g[t]);
    } else {
      parts.insert(parts.begin(), {1.0, g[t]});
      m.push_back(FunctionSpec::composite(std::move(parts)));
    }
  }

  bool singular = false;
  Matrix omega = leading_omega(sigma, T, opts.jitter, &singular);
  meta.sigma_stderr = std::move(sigma_se);
  meta.b_stderr = std::move(b_se);
  meta.singular_omega = singular;

  SeParams params;
  params.T = T;
  params.Sigma = std::move(sigma);
  params.Omega = UpperTriMatrix(std::move(omega));
  params.b = std::move(b);
  params.m = std::move(m);
  params.meta = std::move(meta);
  return {std::move(params), std::move(g)};
}

}  // namespace detail

/// Moment-form state evolution for a fixed system (f, g).
inline SeParams se_monte_carlo(const SystemSpec& sys, Index K, RngStream rng, const SeOptions& opts = {}) {
  sys.validate();
  return detail::se_recursion(sys.n, sys.f, sys.g, false, K, rng, opts).params;
}

struct AmpSeResult {
  SystemSpec system;
  SeParams params;
};

/// State evolution for the Onsager-corrected system
/// g_t = base_g_t - Σ_{s<t} b(s,t) f_s, whose comparison mean is m_t = base_g_t
/// (m ≡ 0 for plain AMP, where base_g is empty).
inline AmpSeResult se_monte_carlo_amp(const std::vector<FunctionSpec>& f, Index n, Index K, RngStream rng,
                                      const std::vector<FunctionSpec>& base_g = {}, const SeOptions& opts = {}) {
  const Index T = static_cast<Index>(f.size());
  std::vector<FunctionSpec> base = base_g.empty() ? std::vector<FunctionSpec>(T, FunctionSpec::zero()) : base_g;
  SystemSpec probe{n, T, f, base};
  probe.validate();
  auto result = detail::se_recursion(n, f, base, true, K, rng, opts);
  SystemSpec sys{n, T, f, std::move(result.g)};
  return {std::move(sys), std::move(result.params)};
}

struct SteinResult {
  /// Total derivative form b(s, t), s < t.
  Matrix b;
  Matrix stderr_b;
  /// First term alone: (1/n) E tr(df_t / dy_s) without propagation through m.
  Matrix direct;
  /// True when some f or m uses a kinked scalar map (relu / soft threshold);
  /// the finite differences then follow the one-sided subgradient a.e.
  bool nondifferentiable = false;
};

namespace detail {

inline bool has_kink(const FunctionSpec& spec) {
  return std::visit(
      [](const auto& k) -> bool {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, FunctionSpec::Separable>) {
          return k.fn == ScalarFn::relu || k.fn == ScalarFn::soft_threshold;
        } else if constexpr (std::is_same_v<K, FunctionSpec::Composite>) {
          for (const auto& [w, part] : k.parts)
            if (has_kink(*part)) return true;
          return false;
        } else {
          return false;
        }
      },
      spec.kind());
}

}  // namespace detail

struct SteinOptions {
  int threads = 1;
  /// Relative finite-difference step: h = rel_step * (1 + max|y|).
  double rel_step = 1e-5;
};

/// Jacobian form of the debiasing coefficients. Traces use Hutchinson
/// probes (Rademacher) and central-difference Jacobian-vector products; the
/// perturbation of y_s is pushed forward through m (forward substitution),
/// which applies (I - dm/dy)^{-1}.
inline SteinResult b_stein(const SystemSpec& sys, const SeParams& params, Index K, int probes, RngStream rng,
                           const SteinOptions& opts = {}) {
  sys.validate();
  const Index n = sys.n, T = sys.T;
  if (params.T != T) throw DimensionMismatch("b_stein: params and system disagree on T");
  if (K < 1 || probes < 1) throw InvalidArgument("b_stein: K and probes must be positive");
  SteinResult out;
  out.b = Matrix::Zero(T, T);
  out.stderr_b = Matrix::Zero(T, T);
  out.direct = Matrix::Zero(T, T);
  for (const auto& s : sys.f) out.nondifferentiable = out.nondifferentiable || detail::has_kink(s);
  for (const auto& s : params.m) out.nondifferentiable = out.nondifferentiable || detail::has_kink(s);

  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix& omega = params.Omega.matrix();
  for (Index t = 1; t < T; ++t) {
    std::vector<Vector> rows(static_cast<std::size_t>(K));
    parallel_for(static_cast<std::size_t>(K), opts.threads, [&](std::size_t k) {
      RngStream rk = rng.substream(k);
      const Matrix z = sample_gaussian_matrix(n, t, rk);
      Matrix w;
      const Matrix y = detail::simulate_prefix(params.m, omega, z, &w);
      const double h = opts.rel_step * (1.0 + y.cwiseAbs().maxCoeff());
      Vector row = Vector::Zero(2 * t);
      Vector v(n);
      Matrix yp(n, t), ym(n, t);
      for (int p = 0; p < probes; ++p) {
        for (Index i = 0; i < n; ++i) v(i) = rk.rademacher();
        for (Index s = 0; s < t; ++s) {
          // Total derivative: perturb w_s and rerun steps s..t-1.
          yp = y;
          ym = y;
          for (Index r = s; r < t; ++r) {
            Vector base_p = params.m[r].eval(yp, r) + w.col(r);
            Vector base_m = params.m[r].eval(ym, r) + w.col(r);
            if (r == s) {
              base_p += h * v;
              base_m -= h * v;
            }
            yp.col(r) = base_p;
            ym.col(r) = base_m;
          }
          const Vector jvp = (sys.f[t].eval(yp, t) - sys.f[t].eval(ym, t)) / (2.0 * h);
          row(s) += v.dot(jvp) * inv_n / probes;
          // Direct term: perturb y_s alone.
          yp = y;
          ym = y;
          yp.col(s) += h * v;
          ym.col(s) -= h * v;
          const Vector djvp = (sys.f[t].eval(yp, t) - sys.f[t].eval(ym, t)) / (2.0 * h);
          row(t + s) += v.dot(djvp) * inv_n / probes;
        }
      }
      rows[k] = std::move(row);
    });
    Vector mean = Vector::Zero(2 * t);
    for (const auto& row : rows) mean += row;
    mean /= static_cast<double>(K);
    Vector var = Vector::Zero(2 * t);
    for (const auto& row : rows) var += (row - mean).cwiseAbs2();
    const double denom = K > 1 ? static_cast<double>(K - 1) * static_cast<double>(K) : 1.0;
    for (Index s = 0; s < t; ++s) {
      out.b(s, t) = mean(s);
      out.stderr_b(s, t) = std::sqrt(var(s) / denom);
      out.direct(s, t) = mean(t + s);
    }
  }
  return out;
}

}  // namespace gfomc
