#pragma once

// Flat key = value experiment configuration and the expression grammar for
// per-step functions.
//
// Function expressions (steps are one-based, t is the current step):
//   expr    := term (('+' | '-') term)*
//   term    := [number '*'] atom | number
//   atom    := 'x[' index ']' | 'const[' ('ones' | 'zero' | number) ']'
//            | fn '(' linear ')' | 'soft[' number '](' linear ')'
//   fn      := 'tanh' | 'relu' | 'id'
//   index   := integer | 't' | 't-' integer
//   linear  := expr restricted to x[...] terms

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gfomc/dynamics.hpp"
#include "gfomc/errors.hpp"

namespace gfomc {

inline ConfigInvalid config_error(const std::string& field, const std::string& message) {
  return ConfigInvalid(std::vector<std::pair<std::string, std::string>>{{field, message}});
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

class ExprParser {
 public:
  ExprParser(std::string text, Index step, Index n) : s_(std::move(text)), step_(step), n_(n) {}

  FunctionSpec parse() {
    auto parts = parse_sum();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + s_.substr(pos_) + "'");
    return assemble(std::move(parts));
  }

 private:
  struct Piece {
    double coeff = 1.0;
    std::optional<Index> x;            // x reference
    std::optional<FunctionSpec> spec;  // everything else
  };

  [[noreturn]] void fail(const std::string& msg) const {
    throw InvalidArgument("expression '" + s_ + "': " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(const std::string& tok) {
    skip_ws();
    if (s_.compare(pos_, tok.size(), tok) == 0) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(const std::string& tok) {
    if (!eat(tok)) fail("expected '" + tok + "'");
  }

  bool peek_number() {
    skip_ws();
    return pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.');
  }

  double number() {
    skip_ws();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  std::string word() {
    skip_ws();
    std::size_t b = pos_;
    while (pos_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    return s_.substr(b, pos_ - b);
  }

  Index index() {
    skip_ws();
    Index one_based;
    if (eat("t")) {
      one_based = step_ + 1;
      if (eat("-")) one_based -= static_cast<Index>(number());
    } else {
      one_based = static_cast<Index>(number());
    }
    if (one_based < 1 || one_based > step_) fail("x[" + std::to_string(one_based) + "] is not a past iterate");
    return one_based - 1;
  }

  std::vector<Piece> parse_sum() {
    std::vector<Piece> parts;
    double sign = 1.0;
    if (eat("-")) sign = -1.0;
    for (;;) {
      Piece p = parse_term();
      p.coeff *= sign;
      parts.push_back(std::move(p));
      if (eat("+"))
        sign = 1.0;
      else if (eat("-"))
        sign = -1.0;
      else
        break;
    }
    return parts;
  }

  Piece parse_term() {
    Piece p;
    if (peek_number()) {
      p.coeff = number();
      if (!eat("*")) {
        p.spec = FunctionSpec::constant(Vector::Constant(n_, 1.0));
        return p;
      }
    }
    const std::string w = word();
    if (w == "x") {
      expect("[");
      p.x = index();
      expect("]");
    } else if (w == "const") {
      expect("[");
      if (eat("ones")) {
        p.spec = FunctionSpec::constant(Vector::Constant(n_, 1.0));
      } else if (eat("zero")) {
        p.spec = FunctionSpec::zero();
      } else {
        p.spec = FunctionSpec::constant(Vector::Constant(n_, number()));
      }
      expect("]");
    } else if (w == "tanh" || w == "relu" || w == "id" || w == "soft") {
      double theta = 0.0;
      if (w == "soft") {
        expect("[");
        theta = number();
        expect("]");
      }
      expect("(");
      auto inner = parse_sum();
      expect(")");
      std::vector<Term> terms;
      for (const auto& q : inner) {
        if (!q.x) fail("arguments of " + w + " must be linear in x");
        terms.push_back({*q.x, q.coeff});
      }
      const ScalarFn fn = w == "tanh"   ? ScalarFn::tanh
                          : w == "relu" ? ScalarFn::relu
                          : w == "id"   ? ScalarFn::identity
                                        : ScalarFn::soft_threshold;
      p.spec = FunctionSpec::separable(fn, std::move(terms), theta);
    } else {
      fail(w.empty() ? "expected a term" : "unknown function '" + w + "'");
    }
    return p;
  }

  static FunctionSpec assemble(std::vector<Piece> parts) {
    std::vector<Term> lin;
    std::vector<std::pair<double, FunctionSpec>> rest;
    for (auto& p : parts) {
      if (p.x)
        lin.push_back({*p.x, p.coeff});
      else
        rest.emplace_back(p.coeff, std::move(*p.spec));
    }
    if (rest.empty()) return FunctionSpec::linear(std::move(lin));
    if (lin.empty() && rest.size() == 1 && rest[0].first == 1.0) return std::move(rest[0].second);
    if (!lin.empty()) rest.insert(rest.begin(), {1.0, FunctionSpec::linear(std::move(lin))});
    return FunctionSpec::composite(std::move(rest));
  }

  std::string s_;
  std::size_t pos_ = 0;
  Index step_;
  Index n_;
};

}  // namespace detail

/// Parses the function used at zero-based step `step` in dimension n.
inline FunctionSpec parse_function(const std::string& expr, Index step, Index n) {
  return detail::ExprParser(expr, step, n).parse();
}

/// Ordered key = value pairs. Lines starting with '#' are comments.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "config") {
  KeyValues out;
  std::vector<std::pair<std::string, std::string>> errors;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.emplace_back(origin + ":" + std::to_string(lineno), "expected 'key = value'");
      continue;
    }
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  if (!errors.empty()) throw ConfigInvalid(std::move(errors));
  return out;
}

inline KeyValues parse_key_values(const std::string& text) {
  std::istringstream in(text);
  return parse_key_values(in);
}

inline KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config", "cannot open " + path);
  return parse_key_values(in, path);
}

struct ExperimentConfig {
  std::string preset;
  /// amp | linear | custom | oracle
  std::string model = "amp";
  std::vector<Index> n = {500};
  Index T = 4;
  Index trials = 100;
  /// Replicates used by state evolution and by the population error terms.
  Index K = 2000;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out = "out";
  std::vector<double> r_grid = {1.0, 2.0, 3.0};
  /// monte_carlo | closed_form | explicit
  std::string se = "monte_carlo";
  double sigma_scale = 1.0;
  double lambda = 0.5;
  /// amp: f_1, f_t for t >= 2, and the base of g_t for t >= 2.
  std::string f1 = "const[ones]";
  std::string f = "tanh(x[t-1])";
  std::string g = "";
  /// custom: per-step overrides (one-based keys).
  std::map<Index, std::string> f_at, g_at, m_at;
  /// explicit Σ: rows separated by ';', entries by ','.
  std::string sigma;
  bool psi = true;
  /// Replicates for the population error terms (0 = K).
  Index psi_K = 0;

  std::map<std::string, std::string> echo() const;
};

namespace detail {

template <class T>
T parse_scalar(const std::string& key, const std::string& v, std::vector<std::pair<std::string, std::string>>& errs) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) {
    errs.emplace_back(key, "cannot parse '" + v + "'");
    return T{};
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v,
                          std::vector<std::pair<std::string, std::string>>& errs) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_scalar<T>(key, trim(item), errs));
  if (out.empty()) errs.emplace_back(key, "empty list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v,
                       std::vector<std::pair<std::string, std::string>>& errs) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  errs.emplace_back(key, "expected true or false");
  return false;
}

template <class T>
std::string join_list(const std::vector<T>& xs) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

}  // namespace detail

/// Applies key = value pairs on top of `cfg`. Unknown keys and malformed
/// values are collected and reported together.
inline void apply_pairs(ExperimentConfig& cfg, const KeyValues& kv) {
  std::vector<std::pair<std::string, std::string>> errs;
  for (const auto& [key, v] : kv) {
    if (key == "preset") cfg.preset = v;
    else if (key == "model") cfg.model = v;
    else if (key == "n") cfg.n = detail::parse_list<Index>(key, v, errs);
    else if (key == "T") cfg.T = detail::parse_scalar<Index>(key, v, errs);
    else if (key == "trials") cfg.trials = detail::parse_scalar<Index>(key, v, errs);
    else if (key == "K") cfg.K = detail::parse_scalar<Index>(key, v, errs);
    else if (key == "seed") cfg.seed = detail::parse_scalar<std::uint64_t>(key, v, errs);
    else if (key == "threads") cfg.threads = detail::parse_scalar<int>(key, v, errs);
    else if (key == "out") cfg.out = v;
    else if (key == "r_grid") cfg.r_grid = detail::parse_list<double>(key, v, errs);
    else if (key == "se") cfg.se = v;
    else if (key == "sigma_scale") cfg.sigma_scale = detail::parse_scalar<double>(key, v, errs);
    else if (key == "lambda") cfg.lambda = detail::parse_scalar<double>(key, v, errs);
    else if (key == "f1") cfg.f1 = v;
    else if (key == "f") cfg.f = v;
    else if (key == "g") cfg.g = v;
    else if (key == "sigma") cfg.sigma = v;
    else if (key == "psi") cfg.psi = detail::parse_bool(key, v, errs);
    else if (key == "psi_K") cfg.psi_K = detail::parse_scalar<Index>(key, v, errs);
    else if (key.size() > 2 && key[1] == '.' && (key[0] == 'f' || key[0] == 'g' || key[0] == 'm')) {
      const Index t = detail::parse_scalar<Index>(key, key.substr(2), errs);
      auto& slot = key[0] == 'f' ? cfg.f_at : key[0] == 'g' ? cfg.g_at : cfg.m_at;
      slot[t] = v;
    } else {
      errs.emplace_back(key, "unknown key");
    }
  }
  if (!errs.empty()) throw ConfigInvalid(std::move(errs));
}

inline void validate(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> errs;
  const bool known = cfg.model == "amp" || cfg.model == "linear" || cfg.model == "custom" || cfg.model == "oracle";
  if (!known) errs.emplace_back("model", "expected amp, linear, custom or oracle");
  if (!cfg.seed) errs.emplace_back("seed", "a seed is required");
  if (cfg.trials < 1) errs.emplace_back("trials", "must be >= 1");
  if (cfg.T < 1) errs.emplace_back("T", "must be >= 1");
  if (cfg.K < 100) errs.emplace_back("K", "must be >= 100");
  if (cfg.threads < 1) errs.emplace_back("threads", "must be >= 1");
  if (!(cfg.sigma_scale > 0.0)) errs.emplace_back("sigma_scale", "must be positive");
  if (cfg.n.empty()) errs.emplace_back("n", "empty list");
  for (Index n : cfg.n)
    if (n < cfg.T) errs.emplace_back("n", "every n must be >= T (got " + std::to_string(n) + ")");
  for (double r : cfg.r_grid)
    if (!(r >= 0.0)) errs.emplace_back("r_grid", "entries must be >= 0");
  if (cfg.se != "monte_carlo" && cfg.se != "closed_form" && cfg.se != "explicit")
    errs.emplace_back("se", "expected monte_carlo, closed_form or explicit");
  if (cfg.se == "explicit" && cfg.sigma.empty()) errs.emplace_back("sigma", "required when se = explicit");
  if (cfg.se == "explicit" && cfg.model != "custom") errs.emplace_back("se", "explicit parameters need model = custom");
  if (cfg.model == "custom") {
    for (Index t = 1; t <= cfg.T; ++t)
      if (!cfg.f_at.count(t)) errs.emplace_back("f." + std::to_string(t), "missing for model = custom");
    if (cfg.se == "explicit")
      for (Index t = 1; t <= cfg.T; ++t)
        if (!cfg.m_at.count(t)) errs.emplace_back("m." + std::to_string(t), "missing for se = explicit");
  }
  if (!errs.empty()) throw ConfigInvalid(std::move(errs));
}

inline std::map<std::string, std::string> ExperimentConfig::echo() const {
  std::map<std::string, std::string> out;
  std::ostringstream d;
  d.precision(17);
  auto num = [&](double v) {
    d.str("");
    d << v;
    return d.str();
  };
  out["preset"] = preset;
  out["model"] = model;
  out["n"] = detail::join_list(n);
  out["T"] = std::to_string(T);
  out["trials"] = std::to_string(trials);
  out["K"] = std::to_string(K);
  out["seed"] = seed ? std::to_string(*seed) : "";
  out["r_grid"] = detail::join_list(r_grid);
  out["se"] = se;
  out["sigma_scale"] = num(sigma_scale);
  out["lambda"] = num(lambda);
  out["f1"] = f1;
  out["f"] = f;
  out["g"] = g;
  out["sigma"] = sigma;
  out["psi"] = psi ? "true" : "false";
  out["psi_K"] = std::to_string(psi_K);
  for (const auto& [t, e] : f_at) out["f." + std::to_string(t)] = e;
  for (const auto& [t, e] : g_at) out["g." + std::to_string(t)] = e;
  for (const auto& [t, e] : m_at) out["m." + std::to_string(t)] = e;
  return out;
}

/// Built-in presets, as config text.
inline const std::map<std::string, std::string>& builtin_presets() {
  static const std::map<std::string, std::string> presets = {
      {"matched-amp-tanh",
       "model = amp\nn = 250, 1000, 4000\nT = 4\ntrials = 100\nK = 2000\nseed = 20240601\n"
       "f1 = const[ones]\nf = tanh(x[t-1])\nr_grid = 1, 2, 3\n"},
      {"mismatch-sweep",
       "model = amp\nn = 500\nT = 4\ntrials = 50\nK = 2000\nseed = 20240602\n"
       "f1 = const[ones]\nf = tanh(x[t-1])\nsigma_scale = 2\nr_grid = 1, 2, 3\n"},
      {"linear-ar",
       "model = linear\nn = 500\nT = 4\ntrials = 200\nseed = 20240603\nlambda = 0.5\nse = closed_form\n"
       "r_grid = 1, 2, 3\n"},
      {"tail-check",
       "model = linear\nn = 500\nT = 3\ntrials = 500\nseed = 20240604\nlambda = 0.5\nse = closed_form\n"
       "r_grid = 1, 2, 3\n"},
      {"oracle-suite", "model = oracle\nn = 60\nT = 4\ntrials = 200\nseed = 20240605\nr_grid = 1, 2, 4\n"},
  };
  return presets;
}

/// Looks up a preset and applies it to a default config.
inline ExperimentConfig preset_config(const std::string& name) {
  const auto& table = builtin_presets();
  const auto it = table.find(name);
  if (it == table.end()) throw config_error("preset", "unknown preset '" + name + "'");
  ExperimentConfig cfg;
  apply_pairs(cfg, parse_key_values(it->second));
  cfg.preset = name;
  return cfg;
}

/// Preset (if the pairs name one) followed by the pairs themselves.
inline ExperimentConfig config_from(const KeyValues& kv) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : kv)
    if (k == "preset") cfg = preset_config(v);
  apply_pairs(cfg, kv);
  return cfg;
}

/// Parses "a,b;c,d" into a square matrix.
inline Matrix parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  std::vector<std::pair<std::string, std::string>> errs;
  while (std::getline(ss, row, ';')) rows.push_back(detail::parse_list<double>("sigma", detail::trim(row), errs));
  if (!errs.empty()) throw ConfigInvalid(std::move(errs));
  const Index T = static_cast<Index>(rows.size());
  Matrix m(T, T);
  for (Index i = 0; i < T; ++i) {
    if (static_cast<Index>(rows[i].size()) != T) throw config_error("sigma", "matrix is not square");
    for (Index j = 0; j < T; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace gfomc
