#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/random.hpp"

namespace pprs {

/// Standard normal CDF via the complementary error function, which keeps
/// full relative precision in both tails.
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Standard normal quantile. Acklam's rational approximation (relative error
/// about 1e-9) followed by two Halley steps on std_normal_cdf.
inline double std_normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("std_normal_inv_cdf: p must lie in (0, 1), got " + std::to_string(p));
  if (p > 0.5) return -std_normal_inv_cdf(1.0 - p);  // 1 - p is exact for p in [0.5, 1)

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int step = 0; step < 2; ++step) {
    const double e = std_normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

namespace detail {

/// Streaming log-sum-exp accumulator.
class LogSum {
 public:
  void add(double log_term) {
    if (log_term == -std::numeric_limits<double>::infinity()) return;
    if (log_term > max_) {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    } else {
      sum_ += std::exp(log_term - max_);
    }
  }
  double log() const { return sum_ == 0.0 ? -std::numeric_limits<double>::infinity() : max_ + std::log(sum_); }
  double max() const { return max_; }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

inline double log_choose(std::uint64_t n, std::uint64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Terms below exp(-kNegligible) relative to the running maximum are dropped
// once the sum is past the mode.
inline constexpr double kNegligible = 60.0;

}  // namespace detail

/// P[X >= k] for X ~ Binomial(n, p), accumulated in log space.
inline double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double log_odds = log_p - log_q;
  double log_term = detail::log_choose(n, k) + static_cast<double>(k) * log_p + static_cast<double>(n - k) * log_q;
  detail::LogSum acc;
  const double mode = static_cast<double>(n + 1) * p;
  for (std::uint64_t i = k;; ++i) {
    acc.add(log_term);
    if (i == n) break;
    if (static_cast<double>(i) > mode && log_term < acc.max() - detail::kNegligible) break;
    log_term += std::log(static_cast<double>(n - i)) - std::log(static_cast<double>(i + 1)) + log_odds;
  }
  return std::min(1.0, std::exp(acc.log()));
}

/// P[X <= k] for X ~ Binomial(n, p), accumulated in log space.
inline double binomial_lower_tail(std::uint64_t k, std::uint64_t n, double p) {
  if (k >= n) return 1.0;
  // P[X <= k] = P[n - X >= n - k] with n - X ~ Binomial(n, 1 - p).
  return binomial_upper_tail(n - k, n, 1.0 - p);
}

/// One-sided (1 - alpha) Clopper-Pearson lower confidence bound on a binomial
/// proportion: the largest p with P[Binomial(n, p) >= k] <= alpha, found by
/// bisection on the exact tail. Returns 0 for k = 0.
inline double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double alpha) {
  if (n == 0 || k > n) throw DomainError("clopper_pearson_lower: need 0 <= k <= n and n >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("clopper_pearson_lower: alpha must lie in (0, 1)");
  if (k == 0) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (binomial_upper_tail(k, n, mid) <= alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// Exact two-sided p-value of k successes in n trials under Binomial(n, 1/2):
/// twice the smaller tail, capped at 1.
inline double binom_two_sided_p(std::uint64_t k, std::uint64_t n) {
  if (k > n) throw DomainError("binom_two_sided_p: k exceeds n");
  if (n == 0) return 1.0;
  const std::uint64_t m = std::min(k, n - k);
  return std::min(1.0, 2.0 * binomial_lower_tail(m, n, 0.5));
}

/// i.i.d. N(0, sigma^2) field shaped like `shape`.
inline Image sample_gaussian_image(std::size_t height, std::size_t width, std::size_t channels, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DomainError("sample_gaussian_image: sigma must be >= 0");
  Image noise(height, width, channels);
  if (sigma == 0.0) return noise;
  for (double& v : noise.values()) v = sigma * rng.normal();
  return noise;
}

inline Image sample_gaussian_image(const Image& shape, double sigma, Rng& rng) {
  return sample_gaussian_image(shape.height(), shape.width(), shape.channels(), sigma, rng);
}

}  // namespace pprs
