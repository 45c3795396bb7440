#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/data.hpp"
#include "gcfa/draws.hpp"
#include "gcfa/error.hpp"
#include "gcfa/factor_algebra.hpp"
#include "gcfa/stochastic.hpp"

namespace gcfa {

// ---------------------------------------------------------------------------
// Independence tests on c_jl.

struct IndependenceTest {
  double two_sided = 0.0;  // P(|c_jl| > eps | Y)
  double one_sided = 0.0;  // P(c_jl > eps | Y)
};

inline IndependenceTest marginal_independence_test(const PosteriorDraws& draws, Index j, Index l, double epsilon) {
  if (draws.size() == 0) throw input_error("no retained draws");
  const Eigen::VectorXd c = draws.correlation_trace(j, l);
  IndependenceTest out;
  for (Index t = 0; t < c.size(); ++t) {
    out.two_sided += std::abs(c(t)) > epsilon;
    out.one_sided += c(t) > epsilon;
  }
  out.two_sided /= static_cast<double>(c.size());
  out.one_sided /= static_cast<double>(c.size());
  return out;
}

// ---------------------------------------------------------------------------
// Posterior predictive sampling.

// Observed-scale value for a latent draw, F^-1(Phi(z)).
inline double observed_value(const EmpiricalCdf& cdf, double z) {
  const double u = normal_cdf(z);
  if (!(u > 0.0)) return cdf.min();
  if (!(u < 1.0)) return cdf.max();
  return cdf.quantile(u);
}

// Observed-scale value of latent z for variable j under retained draw t. Copula
// draws use the empirical pseudo-inverse. Probit columns of parametric draws
// use the stored cutpoints and report the observed value of that category;
// Gaussian columns of parametric draws report z itself, which preserves ranks.
inline double predictive_value(const PosteriorDraws& draws, Index t, Index j, double z, const EmpiricalCdf& cdf) {
  if (draws.has_cutpoints(j)) {
    const auto cuts = draws.cutpoints[static_cast<std::size_t>(j)].row(t);
    Index g = 0;
    while (g < cuts.size() && z > cuts(g)) ++g;
    return cdf.support()[static_cast<std::size_t>(g)];
  }
  if (draws.model != "copula") return z;
  return observed_value(cdf, z);
}

struct PredictiveSample {
  Eigen::MatrixXd latent;    // z*, one row per draw
  Eigen::MatrixXd observed;  // y*
};

/// z* = L eta + e with eta ~ N(0, I_k) and e_j ~ N(0, u_j), mapped through the
/// empirical pseudo-inverses. `per_draw` predictive vectors per retained draw.
inline PredictiveSample sample_predictive(RngStream& rng, const PosteriorDraws& draws,
                                          const std::vector<EmpiricalCdf>& cdfs, Index per_draw = 1) {
  const Index p = draws.variables;
  const Index k = draws.factors;
  if (static_cast<Index>(cdfs.size()) != p) throw input_error("one empirical cdf per variable required");
  if (draws.size() == 0) throw input_error("no retained draws");
  PredictiveSample out{Eigen::MatrixXd(draws.size() * per_draw, p), Eigen::MatrixXd(draws.size() * per_draw, p)};
  Eigen::VectorXd eta(k);
  Index row = 0;
  for (Index t = 0; t < draws.size(); ++t) {
    const Eigen::MatrixXd l = draws.scaled_loadings(t);
    const Eigen::VectorXd u = draws.uniqueness_at(t);
    for (Index r = 0; r < per_draw; ++r, ++row) {
      for (Index h = 0; h < k; ++h) eta(h) = rng.normal();
      for (Index j = 0; j < p; ++j) {
        const double z = l.row(j).dot(eta) + std::sqrt(u(j)) * rng.normal();
        out.latent(row, j) = z;
        out.observed(row, j) = predictive_value(draws, t, j, z, cdfs[static_cast<std::size_t>(j)]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Kendall's tau-b. Returns nothing when either sample is entirely tied.
inline std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw input_error("Kendall's tau needs paired samples of equal length");
  if (x.size() < 2) throw input_error("Kendall's tau needs at least two pairs");
  const std::size_t n = x.size();
  double s = 0.0;
  double ties_x = 0.0;
  double ties_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0) ties_x += 1.0;
      if (dy == 0.0) ties_y += 1.0;
      if (dx != 0.0 && dy != 0.0) s += (dx > 0.0) == (dy > 0.0) ? 1.0 : -1.0;
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double denom = std::sqrt((pairs - ties_x) * (pairs - ties_y));
  if (!(denom > 0.0)) return std::nullopt;
  return s / denom;
}

// ---------------------------------------------------------------------------
// Conditional posterior predictive.

struct Condition {
  Index variable = 0;
  double value = 0.0;
};

struct ConditionalCdf {
  std::vector<double> support;
  std::vector<double> cdf;
  Index skipped_draws = 0;
};

/// Estimates P(y*_target <= y | y*_S = x, Y) at every observed support point y
/// of the target. For each retained draw, eta ~ N(0, I) and each conditioning
/// latent z*_s ~ TN(l_s eta, u_s, a_s, b_s) with a_s = Phi^-1(F_s(x_s-)),
/// b_s = Phi^-1(F_s(x_s)), or +inf at the largest observed value. Each (eta, z*_S) pair is weighted by
/// prod_s P(a_s < z_s <= b_s | eta), which turns the independent univariate
/// draws into an exact importance sample from the truncated (|S|)-variate
/// normal. The target cdf then uses the conditional moments
///   m = l_t L_S' C_S^-1 z*_S,   v = 1 - l_t L_S' C_S^-1 L_S l_t',
/// with C_S^-1 from the Woodbury form. Weights are normalised within each
/// retained draw and the draws averaged with equal weight.
inline ConditionalCdf conditional_predictive(RngStream& rng, const PosteriorDraws& draws,
                                             const std::vector<EmpiricalCdf>& cdfs, Index target,
                                             const std::vector<Condition>& conditions, Index inner = 32) {
  const Index p = draws.variables;
  const Index k = draws.factors;
  if (static_cast<Index>(cdfs.size()) != p) throw input_error("one empirical cdf per variable required");
  if (target < 0 || target >= p) throw input_error("target variable out of range");
  if (draws.size() == 0) throw input_error("no retained draws");
  if (inner < 1) throw input_error("need at least one inner draw");
  auto label = [&](Index j) {
    return static_cast<std::size_t>(j) < draws.labels.size() ? draws.labels[static_cast<std::size_t>(j)]
                                                             : "variable " + std::to_string(j + 1);
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Index s = static_cast<Index>(conditions.size());
  std::vector<Index> idx;
  Eigen::VectorXd lower(s), upper(s);
  for (Index c = 0; c < s; ++c) {
    const auto& cond = conditions[static_cast<std::size_t>(c)];
    if (cond.variable < 0 || cond.variable >= p) throw input_error("conditioning variable out of range");
    if (cond.variable == target) throw input_error("cannot condition on the target " + label(target));
    if (std::find(idx.begin(), idx.end(), cond.variable) != idx.end())
      throw input_error(label(cond.variable) + " is conditioned on twice");
    const auto& cdf = cdfs[static_cast<std::size_t>(cond.variable)];
    if (!cdf.on_support(cond.value))
      throw input_error("conditioning value " + std::to_string(cond.value) + " for " + label(cond.variable) +
                        " is not an observed value");
    idx.push_back(cond.variable);
    lower(c) = normal_quantile(cdf.lower_limit(cond.value));
    // Latent mass above the top threshold maps to the largest observed value.
    upper(c) = cond.value == cdf.support().back() ? kInf : normal_quantile(cdf(cond.value));
  }

  const auto& target_cdf = cdfs[static_cast<std::size_t>(target)];
  ConditionalCdf out;
  out.support = target_cdf.support();
  const std::size_t q = out.support.size();
  std::vector<double> thresholds(q);
  for (std::size_t a = 0; a + 1 < q; ++a) thresholds[a] = normal_quantile(target_cdf.cumulative()[a]);
  thresholds[q - 1] = kInf;
  out.cdf.assign(q, 0.0);

  Eigen::VectorXd eta(k), z(s), log_w(inner), means(inner);
  Index used = 0;
  for (Index t = 0; t < draws.size(); ++t) {
    const Eigen::MatrixXd l = draws.scaled_loadings(t);
    const Eigen::VectorXd u = draws.uniqueness_at(t);
    const Eigen::RowVectorXd lt = l.row(target);
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(s);
    double v = 1.0;
    Eigen::MatrixXd ls(s, k);
    Eigen::VectorXd us(s);
    for (Index c = 0; c < s; ++c) {
      ls.row(c) = l.row(idx[static_cast<std::size_t>(c)]);
      us(c) = u(idx[static_cast<std::size_t>(c)]);
    }
    if (s > 0) {
      w = lt * ls.transpose() * precision_woodbury(ls, us);
      v = 1.0 - w.dot(ls * lt.transpose());
    }
    v = std::max(v, 1e-12);
    for (Index r = 0; r < inner; ++r) {
      for (Index h = 0; h < k; ++h) eta(h) = rng.normal();
      double lw = 0.0;
      for (Index c = 0; c < s; ++c) {
        const double mean = ls.row(c).dot(eta);
        const double sd = std::sqrt(us(c));
        z(c) = sample_truncated_normal(rng, mean, us(c), lower(c), upper(c));
        lw += std::log(normal_interval_prob((lower(c) - mean) / sd, (upper(c) - mean) / sd));
      }
      log_w(r) = lw;
      means(r) = s > 0 ? w.dot(z) : 0.0;
    }
    const double top = log_w.maxCoeff();
    if (!std::isfinite(top)) {
      ++out.skipped_draws;
      continue;
    }
    const Eigen::VectorXd weights = (log_w.array() - top).exp().matrix();
    const double total = weights.sum();
    const double sd = std::sqrt(v);
    for (std::size_t a = 0; a < q; ++a) {
      double acc = 0.0;
      for (Index r = 0; r < inner; ++r) acc += weights(r) * normal_cdf((thresholds[a] - means(r)) / sd);
      out.cdf[a] += acc / total;
    }
    ++used;
  }
  if (used == 0) throw numeric_error("every draw had zero conditioning probability");
  for (double& c : out.cdf) c /= static_cast<double>(used);
  return out;
}

// ---------------------------------------------------------------------------
// Summaries.

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

namespace detail {
inline std::size_t window_size(std::size_t n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw input_error("interval level must lie in (0,1)");
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(level * static_cast<double>(n))), 1, n);
}
}  // namespace detail

/// Shortest interval spanning ceil(level * N) sorted draws.
inline Interval hpd_interval(std::span<const double> trace, double level) {
  if (trace.empty()) throw input_error("empty trace");
  std::vector<double> x(trace.begin(), trace.end());
  std::sort(x.begin(), x.end());
  const std::size_t w = detail::window_size(x.size(), level);
  std::size_t best = 0;
  for (std::size_t i = 1; i + w <= x.size(); ++i)
    if (x[i + w - 1] - x[i] < x[best + w - 1] - x[best]) best = i;
  return {x[best], x[best + w - 1]};
}

// Equal-tailed interval over the same number of sorted draws as the HPD window.
inline Interval central_interval(std::span<const double> trace, double level) {
  if (trace.empty()) throw input_error("empty trace");
  std::vector<double> x(trace.begin(), trace.end());
  std::sort(x.begin(), x.end());
  const std::size_t w = detail::window_size(x.size(), level);
  const std::size_t lo = (x.size() - w) / 2;
  return {x[lo], x[lo + w - 1]};
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  Interval central90, central95, hpd90, hpd95;
};

inline ParameterSummary summarize(std::span<const double> trace, std::string name = {}) {
  if (trace.size() < 100) throw input_error("summaries need at least 100 retained draws");
  ParameterSummary s;
  s.name = std::move(name);
  const double n = static_cast<double>(trace.size());
  for (double x : trace) s.mean += x;
  s.mean /= n;
  for (double x : trace) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / (n - 1.0));
  s.central90 = central_interval(trace, 0.90);
  s.central95 = central_interval(trace, 0.95);
  s.hpd90 = hpd_interval(trace, 0.90);
  s.hpd95 = hpd_interval(trace, 0.95);
  return s;
}

inline ParameterSummary summarize(const Eigen::VectorXd& trace, std::string name = {}) {
  return summarize(std::span<const double>(trace.data(), static_cast<std::size_t>(trace.size())), std::move(name));
}

/// Summaries of every scaled loading, uniqueness and off-diagonal correlation.
inline std::vector<ParameterSummary> summarize(const PosteriorDraws& draws) {
  std::vector<ParameterSummary> out;
  const auto& lab = draws.labels;
  auto name = [&](Index j) {
    return static_cast<std::size_t>(j) < lab.size() ? lab[static_cast<std::size_t>(j)] : "V" + std::to_string(j + 1);
  };
  for (Index j = 0; j < draws.variables; ++j)
    for (Index h = 0; h < draws.factors; ++h)
      out.push_back(summarize(draws.loading_trace(j, h), "loading[" + name(j) + "," + std::to_string(h + 1) + "]"));
  for (Index j = 0; j < draws.variables; ++j)
    out.push_back(summarize(Eigen::VectorXd(draws.uniqueness.col(j)), "uniqueness[" + name(j) + "]"));
  for (Index j = 0; j < draws.variables; ++j)
    for (Index l = j + 1; l < draws.variables; ++l)
      out.push_back(summarize(draws.correlation_trace(j, l), "correlation[" + name(j) + "," + name(l) + "]"));
  return out;
}

}  // namespace gcfa
