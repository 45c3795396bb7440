#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "gcfa/error.hpp"

namespace gcfa {

// ---------------------------------------------------------------------------
// Standard normal functions.

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw input_error("normal quantile level outside [0,1]");
  }
  if (p < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

inline double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-normal_sf(x));
  if (x > -37.0) return std::log(normal_cdf(x));
  // Mills-ratio asymptotics once erfc underflows.
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log1p(-1.0 / (x * x));
}

// P(a < Z <= b) for standard normal Z, evaluated on the tail with better precision.
inline double normal_interval_prob(double a, double b) {
  if (a > 0.0) return normal_sf(a) - normal_sf(b);
  return normal_cdf(b) - normal_cdf(a);
}

// ---------------------------------------------------------------------------

/// Seedable pseudo-random stream. One per chain or replicate; never shared.
class RngStream {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on the open interval (0,1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Shape/rate parameterisation.
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0)(engine_) / rate;
  }

  Eigen::VectorXd dirichlet(const Eigen::VectorXd& concentration) {
    Eigen::VectorXd g(concentration.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = gamma(concentration(i), 1.0);
    return g / g.sum();
  }

  Eigen::VectorXd normal_vector(Eigen::Index size) {
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

// ---------------------------------------------------------------------------
// Truncated normal.

namespace detail {

// Exponential-proposal rejection for a standard normal on (lo, hi), lo >= 0.
inline double truncated_normal_upper_tail(RngStream& rng, double lo, double hi) {
  const double rate = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
  for (;;) {
    const double x = lo + rng.exponential(rate);
    if (x >= hi) continue;
    const double d = x - rate;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return x;
  }
}

}  // namespace detail

/// Standard normal restricted to (lo, hi). Every branch is an exact rejection
/// sampler: uniform proposals for narrow intervals, exponential proposals when
/// the interval sits in one tail, and plain normal proposals otherwise.
inline double standard_truncated_normal(RngStream& rng, double lo, double hi) {
  const double width = hi - lo;
  const double mode = lo > 0.0 ? lo : (hi < 0.0 ? hi : 0.0);
  if (width * (2.0 * std::abs(mode) + width) <= 2.0) {
    const double m2 = mode * mode;
    for (;;) {
      const double x = lo + rng.uniform() * width;
      if (rng.uniform() <= std::exp(0.5 * (m2 - x * x))) return x;
    }
  }
  if (lo >= 0.5) return detail::truncated_normal_upper_tail(rng, lo, hi);
  if (hi <= -0.5) return -detail::truncated_normal_upper_tail(rng, -hi, -lo);
  for (;;) {
    const double x = rng.normal();
    if (x > lo && x < hi) return x;
  }
}

/// Draw from N(mean, variance) restricted to the open interval (lower, upper);
/// either bound may be infinite.
inline double sample_truncated_normal(RngStream& rng, double mean, double variance, double lower,
                                      double upper) {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw input_error("truncated normal variance must be positive and finite");
  if (!(lower < upper)) throw input_error("truncated normal requires lower < upper");
  const double sd = std::sqrt(variance);
  const double x = mean + sd * standard_truncated_normal(rng, (lower - mean) / sd, (upper - mean) / sd);
  // Rounding in the affine map can land on a bound.
  if (x <= lower) return std::nextafter(lower, upper);
  if (x >= upper) return std::nextafter(upper, lower);
  return x;
}

// ---------------------------------------------------------------------------

/// Inverse-Gaussian with the given mean and shape (variance mean^3/shape), by
/// the transformation-with-rejection method of Michael, Schucany and Haas.
inline double sample_inverse_gaussian(RngStream& rng, double mean, double shape) {
  if (!(mean > 0.0) || !(shape > 0.0)) throw input_error("inverse-Gaussian parameters must be positive");
  const double nu = rng.normal();
  const double y = nu * nu;
  const double my = mean * y;
  // Larger root computed without cancellation; the smaller is mean^2 / larger.
  const double large = mean + mean * (my + std::sqrt(4.0 * shape * my + my * my)) / (2.0 * shape);
  const double small = mean * mean / large;
  if (rng.uniform() <= mean / (mean + small)) return small;
  return large;
}

// ---------------------------------------------------------------------------
// Loadings priors.

struct GdpParams {
  double alpha = 3.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw input_error("GDP parameters must be positive");
  }
};

// lambda ~ N(0, 1/precision).
struct NormalParams {
  double precision = 1.0;

  void validate() const {
    if (!(precision > 0.0)) throw input_error("normal prior precision must be positive");
  }
};

using LoadingsPrior = std::variant<GdpParams, NormalParams>;

inline std::string describe(const LoadingsPrior& prior) {
  if (const auto* g = std::get_if<GdpParams>(&prior))
    return "gdp:" + std::to_string(g->alpha) + "," + std::to_string(g->beta);
  return "normal:" + std::to_string(1.0 / std::get<NormalParams>(prior).precision);
}

/// GDP(alpha, beta) density (alpha / 2 beta) (1 + |x|/beta)^-(alpha+1).
inline double gdp_density(double x, const GdpParams& params) {
  return params.alpha / (2.0 * params.beta) * std::pow(1.0 + std::abs(x) / params.beta, -(params.alpha + 1.0));
}

// Normal / exponential / gamma scale mixture.
inline double sample_gdp(RngStream& rng, const GdpParams& params) {
  const double rate = rng.gamma(params.alpha, params.beta);
  const double variance = rng.exponential(0.5 * rate * rate);
  return std::sqrt(variance) * rng.normal();
}

inline double sample_loading_prior(RngStream& rng, const LoadingsPrior& prior) {
  if (const auto* g = std::get_if<GdpParams>(&prior)) return sample_gdp(rng, *g);
  return rng.normal() / std::sqrt(std::get<NormalParams>(prior).precision);
}

/// Density of the uniqueness u = 1/(1 + sum_h lambda_h^2) implied by k iid
/// N(0, 1/b) loadings. The squared norm is Gamma(k/2, rate b/2), so
///   pi(u) = (b/2)^{k/2} / Gamma(k/2) u^-2 ((1-u)/u)^{k/2-1} exp(-b(1-u)/(2u)).
inline double normal_induced_uniqueness_density(double u, int k, double b) {
  if (!(u > 0.0 && u < 1.0)) throw input_error("uniqueness must lie in (0,1)");
  if (k < 1 || !(b > 0.0)) throw input_error("need k >= 1 and b > 0");
  const double half_k = 0.5 * k;
  const double s = (1.0 - u) / u;
  const double log_density = half_k * std::log(0.5 * b) - std::lgamma(half_k) - 2.0 * std::log(u) +
                             (half_k - 1.0) * std::log(s) - 0.5 * b * s;
  return std::exp(log_density);
}

struct InducedPriorSample {
  Eigen::MatrixXd scaled_loadings;  // draws x k
  Eigen::VectorXd uniqueness;       // draws
};

/// Draws of one scaled loadings row and its uniqueness under a loadings prior.
inline InducedPriorSample simulate_induced_prior(RngStream& rng, const LoadingsPrior& prior, int k,
                                                 Eigen::Index draws) {
  if (draws < 1) throw input_error("need at least one draw");
  if (k < 1) throw input_error("need k >= 1");
  InducedPriorSample out{Eigen::MatrixXd(draws, k), Eigen::VectorXd(draws)};
  Eigen::VectorXd row(k);
  for (Eigen::Index t = 0; t < draws; ++t) {
    for (int h = 0; h < k; ++h) row(h) = sample_loading_prior(rng, prior);
    const double scale = 1.0 + row.squaredNorm();
    out.scaled_loadings.row(t) = row.transpose() / std::sqrt(scale);
    out.uniqueness(t) = 1.0 / scale;
  }
  return out;
}

}  // namespace gcfa
