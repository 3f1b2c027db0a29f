#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gfomc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotPositiveSemidefinite : public Error {
 public:
  NotPositiveSemidefinite(const std::string& what, double min_eigenvalue)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

/// Raised by state evolution when the Monte Carlo covariance estimate fails
/// the PSD tolerance.
class SigmaNotPsd : public NotPositiveSemidefinite {
 public:
  using NotPositiveSemidefinite::NotPositiveSemidefinite;
};

class SingularSigma : public Error {
 public:
  using Error::Error;
};

class MissingHistory : public Error {
 public:
  using Error::Error;
};

/// A trajectory produced NaN or Inf; `step` is the zero-based column index.
class NonFinite : public Error {
 public:
  NonFinite(const std::string& what, std::ptrdiff_t step) : Error(what), step_(step) {}
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

class BasisExhausted : public Error {
 public:
  using Error::Error;
};

class InconsistentRealization : public Error {
 public:
  using Error::Error;
};

class NonDifferentiableKind : public Error {
 public:
  using Error::Error;
};

/// Configuration validation failure; carries one message per offending field.
class ConfigInvalid : public Error {
 public:
  explicit ConfigInvalid(std::vector<std::pair<std::string, std::string>> fields)
      : Error(join(fields)), fields_(std::move(fields)) {}
  const std::vector<std::pair<std::string, std::string>>& fields() const noexcept {
    return fields_;
  }

 private:
  static std::string join(const std::vector<std::pair<std::string, std::string>>& fields) {
    std::string out = "invalid configuration:";
    for (const auto& [key, msg] : fields) {
      out += "\n  ";
      out += key;
      out += ": ";
      out += msg;
    }
    return out;
  }
  std::vector<std::pair<std::string, std::string>> fields_;
};

}  // namespace gfomc
