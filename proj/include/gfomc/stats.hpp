#pragma once

// Small statistics toolkit for the Monte Carlo checks: running moments,
// Wilson intervals, a one-sample KS test against N(0, 1) and quantiles.

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "gfomc/errors.hpp"

namespace gfomc::stats {

/// Welford accumulator.
class RunningMoments {
 public:
  void add(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0; }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double stderr_of_mean() const noexcept {
    return count_ > 0 ? stddev() / std::sqrt(static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double student_t_quantile(double p, double dof) {
  return boost::math::quantile(boost::math::students_t_distribution<double>(dof), p);
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided Wilson score interval for `successes` out of `trials`.
inline Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence = 0.99) {
  if (trials == 0) throw InvalidArgument("wilson_interval: zero trials");
  const double z = normal_quantile(0.5 + 0.5 * confidence);
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Kolmogorov-Smirnov statistic of `samples` against the standard normal.
inline double ks_statistic_normal(std::vector<double> samples) {
  if (samples.empty()) throw InvalidArgument("ks_statistic_normal: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = normal_cdf(samples[i]);
    d = std::max(d, static_cast<double>(i + 1) / n - cdf);
    d = std::max(d, cdf - static_cast<double>(i) / n);
  }
  return d;
}

/// Survival function of the Kolmogorov distribution, P(K > x).
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Critical value of the one-sample KS statistic at level `alpha` for sample
/// size n, using Stephens' finite-sample correction of the asymptotic law.
inline double ks_critical_value(std::size_t n, double alpha = 0.01) {
  double lo = 0.1, hi = 5.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_survival(mid) > alpha ? lo : hi) = mid;
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  return 0.5 * (lo + hi) / (root_n + 0.12 + 0.11 / root_n);
}

}  // namespace gfomc::stats
