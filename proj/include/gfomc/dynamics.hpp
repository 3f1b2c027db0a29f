#pragma once

// Nonlinearity registry and the two iterations driven by it:
//
//   GFOM         x_t = A f_t(x_{<t}) + g_t(x_{<t})
//   comparison   y_t = m_t(y_{<t}) + w_t,   W = Z Ω
//
// Steps are zero-based throughout: step t reads history columns 0..t-1.

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gfomc/errors.hpp"
#include "gfomc/linalg.hpp"

namespace gfomc {

enum class ScalarFn { tanh, soft_threshold, identity, relu };

inline const char* to_string(ScalarFn fn) {
  switch (fn) {
    case ScalarFn::tanh: return "tanh";
    case ScalarFn::soft_threshold: return "soft";
    case ScalarFn::identity: return "id";
    case ScalarFn::relu: return "relu";
  }
  return "?";
}

/// coeff * history column `index`.
struct Term {
  Index index = 0;
  double coeff = 1.0;
};

/// Declarative description of one map f_t, g_t or m_t from the history
/// prefix to R^n. Immutable after construction; cheap to copy.
class FunctionSpec {
 public:
  struct Constant {
    Vector value;
  };
  /// Σ coeff * x_index.
  struct Linear {
    std::vector<Term> terms;
  };
  /// Entrywise scalar function of Σ coeff * x_index.
  struct Separable {
    ScalarFn fn = ScalarFn::identity;
    double theta = 0.0;
    std::vector<Term> input;
  };
  /// mixing * x_index for a fixed n x n matrix.
  struct MatrixLinear {
    std::shared_ptr<const Matrix> mixing;
    Index index = 0;
  };
  /// Σ weight * part, kept symbolic so the weights (e.g. Onsager
  /// coefficients) stay recoverable.
  struct Composite {
    std::vector<std::pair<double, std::shared_ptr<const FunctionSpec>>> parts;
  };
  using Kind = std::variant<Constant, Linear, Separable, MatrixLinear, Composite>;

  FunctionSpec() : FunctionSpec(Linear{}) {}

  static FunctionSpec constant(Vector value) { return FunctionSpec(Constant{std::move(value)}); }
  static FunctionSpec zero() { return FunctionSpec(Linear{}); }
  static FunctionSpec linear(std::vector<Term> terms) { return FunctionSpec(Linear{std::move(terms)}); }
  static FunctionSpec separable(ScalarFn fn, std::vector<Term> input, double theta = 0.0) {
    if (fn == ScalarFn::soft_threshold && theta < 0.0)
      throw InvalidArgument("soft_threshold: threshold must be nonnegative");
    return FunctionSpec(Separable{fn, theta, std::move(input)});
  }
  static FunctionSpec matrix_linear(Matrix mixing, Index index) {
    if (mixing.rows() != mixing.cols()) throw DimensionMismatch("matrix_linear: mixing matrix must be square");
    return FunctionSpec(MatrixLinear{std::make_shared<const Matrix>(std::move(mixing)), index});
  }
  static FunctionSpec composite(std::vector<std::pair<double, FunctionSpec>> parts) {
    Composite c;
    for (auto& [w, spec] : parts) c.parts.emplace_back(w, std::make_shared<const FunctionSpec>(std::move(spec)));
    return FunctionSpec(std::move(c));
  }

  const Kind& kind() const noexcept { return kind_; }
  double lipschitz() const noexcept { return lipschitz_; }
  const std::vector<Index>& memory() const noexcept { return memory_; }
  bool is_constant() const noexcept { return memory_.empty(); }

  /// Replaces the declared Lipschitz constant; it may only grow.
  FunctionSpec with_lipschitz(double declared) const {
    if (declared < lipschitz_) throw InvalidArgument("with_lipschitz: declared constant below the computed bound");
    FunctionSpec out = *this;
    out.lipschitz_ = declared;
    return out;
  }

  /// Evaluates on the first `available` columns of `history` (n x T).
  Vector eval(const Matrix& history, Index available) const {
    if (!memory_.empty() && memory_.back() >= available)
      throw MissingHistory("FunctionSpec::eval: needs column " + std::to_string(memory_.back()) + " but only " +
                           std::to_string(available) + " available");
    return eval_unchecked(history);
  }

  std::string describe() const {
    std::ostringstream os;
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Constant>) {
            os << "const[n=" << k.value.size() << ", norm=" << k.value.norm() << "]";
          } else if constexpr (std::is_same_v<K, Linear>) {
            os << "lin(" << describe_terms(k.terms) << ")";
          } else if constexpr (std::is_same_v<K, Separable>) {
            os << to_string(k.fn);
            if (k.fn == ScalarFn::soft_threshold) os << "[" << k.theta << "]";
            os << "(" << describe_terms(k.input) << ")";
          } else if constexpr (std::is_same_v<K, MatrixLinear>) {
            os << "mix[" << k.mixing->rows() << "x" << k.mixing->cols() << "](x" << k.index << ")";
          } else {
            os << "sum(";
            for (std::size_t i = 0; i < k.parts.size(); ++i) {
              if (i) os << " + ";
              os << k.parts[i].first << "*" << k.parts[i].second->describe();
            }
            os << ")";
          }
        },
        kind_);
    return os.str();
  }

 private:
  explicit FunctionSpec(Kind kind) : kind_(std::move(kind)) { analyse(); }

  static std::string describe_terms(const std::vector<Term>& terms) {
    std::ostringstream os;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (i) os << " + ";
      os << terms[i].coeff << "*x" << terms[i].index;
    }
    if (terms.empty()) os << "0";
    return os.str();
  }

  static double coeff_norm(const std::vector<Term>& terms) {
    // Terms on the same column add up before taking the norm.
    std::vector<std::pair<Index, double>> merged;
    for (const auto& term : terms) {
      auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& p) { return p.first == term.index; });
      if (it == merged.end())
        merged.emplace_back(term.index, term.coeff);
      else
        it->second += term.coeff;
    }
    double s = 0.0;
    for (const auto& [i, c] : merged) s += c * c;
    return std::sqrt(s);
  }

  void analyse() {
    std::set<Index> mem;
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Constant>) {
            lipschitz_ = 0.0;
          } else if constexpr (std::is_same_v<K, Linear>) {
            for (const auto& t : k.terms) mem.insert(t.index);
            lipschitz_ = coeff_norm(k.terms);
          } else if constexpr (std::is_same_v<K, Separable>) {
            for (const auto& t : k.input) mem.insert(t.index);
            // All registered scalar maps are 1-Lipschitz.
            lipschitz_ = coeff_norm(k.input);
          } else if constexpr (std::is_same_v<K, MatrixLinear>) {
            mem.insert(k.index);
            lipschitz_ = operator_norm(*k.mixing);
          } else {
            // Parts reading disjoint columns combine in quadrature; otherwise
            // fall back to the triangle inequality.
            bool disjoint = true;
            std::set<Index> seen;
            double quad = 0.0, tri = 0.0;
            for (const auto& [w, part] : k.parts) {
              for (Index i : part->memory()) {
                if (!seen.insert(i).second) disjoint = false;
                mem.insert(i);
              }
              const double l = std::abs(w) * part->lipschitz();
              quad += l * l;
              tri += l;
            }
            lipschitz_ = disjoint ? std::sqrt(quad) : tri;
          }
        },
        kind_);
    for (Index i : mem)
      if (i < 0) throw InvalidArgument("FunctionSpec: negative history index");
    memory_.assign(mem.begin(), mem.end());
  }

  static Vector combine(const Matrix& history, const std::vector<Term>& terms) {
    Vector out = Vector::Zero(history.rows());
    for (const auto& t : terms) out.noalias() += t.coeff * history.col(t.index);
    return out;
  }

  Vector eval_unchecked(const Matrix& history) const {
    return std::visit(
        [&](const auto& k) -> Vector {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Constant>) {
            if (k.value.size() != history.rows())
              throw DimensionMismatch("constant FunctionSpec has length " + std::to_string(k.value.size()) +
                                      ", history has n = " + std::to_string(history.rows()));
            return k.value;
          } else if constexpr (std::is_same_v<K, Linear>) {
            return combine(history, k.terms);
          } else if constexpr (std::is_same_v<K, Separable>) {
            Vector u = combine(history, k.input);
            switch (k.fn) {
              case ScalarFn::tanh: u = u.array().tanh(); break;
              case ScalarFn::soft_threshold: {
                const double th = k.theta;
                u = u.unaryExpr([th](double v) { return v > th ? v - th : (v < -th ? v + th : 0.0); });
                break;
              }
              case ScalarFn::identity: break;
              case ScalarFn::relu: u = u.cwiseMax(0.0); break;
            }
            return u;
          } else if constexpr (std::is_same_v<K, MatrixLinear>) {
            if (k.mixing->rows() != history.rows()) throw DimensionMismatch("matrix_linear: mixing size differs from n");
            return (*k.mixing) * history.col(k.index);
          } else {
            Vector out = Vector::Zero(history.rows());
            for (const auto& [w, part] : k.parts) out.noalias() += w * part->eval_unchecked(history);
            return out;
          }
        },
        kind_);
  }

  Kind kind_;
  double lipschitz_ = 0.0;
  std::vector<Index> memory_;
};

/// n x T sequence filled one column at a time.
class Trajectory {
 public:
  Trajectory(Index n, Index T) : columns_(Matrix::Zero(n, T)) {}

  Index n() const noexcept { return columns_.rows(); }
  Index T() const noexcept { return columns_.cols(); }
  Index filled() const noexcept { return filled_; }
  bool complete() const noexcept { return filled_ == T(); }
  const Matrix& columns() const noexcept { return columns_; }
  auto column(Index t) const { return columns_.col(t); }

  /// Appends the next column; rejects NaN / Inf.
  void push(const Vector& v) {
    if (filled_ >= T()) throw InvalidArgument("Trajectory: already complete");
    if (v.size() != n()) throw DimensionMismatch("Trajectory: column length differs from n");
    if (!v.allFinite()) throw NonFinite("non-finite iterate at step " + std::to_string(filled_), filled_);
    columns_.col(filled_++) = v;
  }

 private:
  Matrix columns_;
  Index filled_ = 0;
};

struct SystemSpec {
  Index n = 0;
  Index T = 0;
  std::vector<FunctionSpec> f;
  std::vector<FunctionSpec> g;

  /// Lipschitz constants maximised over steps.
  double lipschitz_f() const {
    double l = 0.0;
    for (const auto& s : f) l = std::max(l, s.lipschitz());
    return l;
  }
  double lipschitz_g() const {
    double l = 0.0;
    for (const auto& s : g) l = std::max(l, s.lipschitz());
    return l;
  }

  void validate() const {
    if (n < 1 || T < 1) throw InvalidArgument("SystemSpec: n and T must be >= 1");
    if (T > n) throw InvalidArgument("SystemSpec: T must not exceed n");
    if (static_cast<Index>(f.size()) != T || static_cast<Index>(g.size()) != T)
      throw DimensionMismatch("SystemSpec: f and g must have T entries");
    for (Index t = 0; t < T; ++t) {
      for (const auto* spec : {&f[t], &g[t]}) {
        if (!spec->memory().empty() && spec->memory().back() >= t)
          throw InvalidArgument("SystemSpec: step " + std::to_string(t) + " reads a non-past column");
      }
    }
  }
};

/// Evaluates `spec` on the first `available` columns of `history`.
inline Vector eval(const FunctionSpec& spec, const Matrix& history, Index available) {
  return spec.eval(history, available);
}

/// Runs the GFOM x_t = A f_t(x_{<t}) + g_t(x_{<t}).
inline Trajectory run_gfom(const SystemSpec& sys, const SymMatrix& a) {
  sys.validate();
  if (a.n() != sys.n) throw DimensionMismatch("run_gfom: A is not n x n");
  Trajectory x(sys.n, sys.T);
  for (Index t = 0; t < sys.T; ++t) {
    Vector next = a.matrix() * sys.f[t].eval(x.columns(), t);
    next += sys.g[t].eval(x.columns(), t);
    x.push(next);
  }
  return x;
}

struct ComparisonResult {
  Trajectory y;
  Matrix w;
};

/// Runs the comparison process y_t = m_t(y_{<t}) + w_t with W = Z Ω.
inline ComparisonResult run_comparison(const std::vector<FunctionSpec>& m, const UpperTriMatrix& omega,
                                       const Matrix& z) {
  const Index T = omega.size();
  if (static_cast<Index>(m.size()) != T || z.cols() != T)
    throw DimensionMismatch("run_comparison: m, Omega and Z disagree on T");
  for (Index t = 0; t < T; ++t)
    if (!m[t].memory().empty() && m[t].memory().back() >= t)
      throw InvalidArgument("run_comparison: m_" + std::to_string(t) + " reads a non-past column");
  Matrix w = z * omega.matrix();
  Trajectory y(z.rows(), T);
  for (Index t = 0; t < T; ++t) y.push(m[t].eval(y.columns(), t) + w.col(t));
  return {std::move(y), std::move(w)};
}

/// AMP form: g_t = base_g_t - Σ_{s<t} b(s, t) f_s. With no base the result
/// is the plain Onsager-corrected iteration.
inline SystemSpec amp_from_f(const std::vector<FunctionSpec>& f, const Matrix& b, Index n,
                             const std::vector<FunctionSpec>& base_g = {}) {
  const Index T = static_cast<Index>(f.size());
  if (b.rows() != T || b.cols() != T) throw DimensionMismatch("amp_from_f: b must be T x T");
  if (!base_g.empty() && static_cast<Index>(base_g.size()) != T)
    throw DimensionMismatch("amp_from_f: base_g must have T entries");
  SystemSpec sys{n, T, f, {}};
  sys.g.reserve(T);
  for (Index t = 0; t < T; ++t) {
    std::vector<std::pair<double, FunctionSpec>> parts;
    if (!base_g.empty()) parts.emplace_back(1.0, base_g[t]);
    for (Index s = 0; s < t; ++s)
      if (b(s, t) != 0.0) parts.emplace_back(-b(s, t), f[s]);
    if (parts.empty())
      sys.g.push_back(FunctionSpec::zero());
    else if (parts.size() == 1 && parts[0].first == 1.0)
      sys.g.push_back(parts[0].second);
    else
      sys.g.push_back(FunctionSpec::composite(std::move(parts)));
  }
  return sys;
}

/// Columns f_t(history_{<t}) for every step, as an n x T matrix.
inline Matrix evaluate_columns(const std::vector<FunctionSpec>& specs, const Matrix& history) {
  Matrix out(history.rows(), static_cast<Index>(specs.size()));
  for (Index t = 0; t < static_cast<Index>(specs.size()); ++t) out.col(t) = specs[t].eval(history, t);
  return out;
}

}  // namespace gfomc
