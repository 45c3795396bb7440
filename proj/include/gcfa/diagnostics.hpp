#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <span>
#include <vector>

#include "gcfa/error.hpp"

namespace gcfa {

/// Effective sample size from Geyer's initial monotone positive sequence
/// estimator. Clamped to (0, N]; a constant trace reports N.
inline double effective_sample_size(std::span<const double> trace) {
  const std::size_t n = trace.size();
  if (n < 100) throw input_error("effective sample size needs at least 100 draws");
  double mean = 0.0;
  for (double x : trace) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> d(n);
  for (std::size_t t = 0; t < n; ++t) d[t] = trace[t] - mean;
  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) acc += d[t] * d[t + lag];
    return acc / static_cast<double>(n);
  };
  const double gamma0 = autocov(0);
  if (!(gamma0 > 1e-300)) {
    std::clog << "warning: constant trace; effective sample size set to the draw count\n";
    return static_cast<double>(n);
  }
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    sum += pair;
  }
  const double variance = -gamma0 + 2.0 * sum;
  const double ess = static_cast<double>(n) * gamma0 / variance;
  return std::clamp(ess, std::numeric_limits<double>::min(), static_cast<double>(n));
}

struct TwoSampleTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test. The asymptotic p-value uses the given
/// sample sizes, so autocorrelated traces can pass their effective sizes.
inline TwoSampleTest ks_two_sample(std::span<const double> a, std::span<const double> b, double size_a,
                                   double size_b) {
  if (a.empty() || b.empty()) throw input_error("KS test needs two non-empty samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
  }
  const double ne = size_a * size_b / (size_a + size_b);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double q = 0.0;
  if (lambda < 1e-3) {
    q = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      q += term;
      if (std::abs(term) < 1e-12) break;
      sign = -sign;
    }
    q = std::clamp(2.0 * q, 0.0, 1.0);
  }
  return {d, q};
}

}  // namespace gcfa
