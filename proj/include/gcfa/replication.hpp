#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/analytics.hpp"
#include "gcfa/baselines.hpp"
#include "gcfa/gibbs.hpp"
#include "gcfa/io.hpp"
#include "gcfa/simulation.hpp"

namespace gcfa {

// Political-economic risk study: copula factor model against a mixed
// Gaussian/probit factor model on log-transformed positive columns.

inline constexpr const char* kGdpwLabel = "GDP.Per.Worker";
inline constexpr const char* kBmpLabel = "Black.Mkt.Premium";

struct QuinnConfig {
  McmcConfig mcmc = [] {
    McmcConfig c;
    c.iterations = 100000;
    c.burnin = 10000;
    c.thin = 10;
    c.factors = 1;
    c.seed = 7;
    return c;
  }();
  Index predictive_datasets = 1000;  // replicated datasets for the tau checks
  int bootstrap = 1000;
  double level = 0.95;
  std::uint64_t seed = 7;  // predictive and bootstrap stream
};

struct TauCheck {
  Index first = 0;
  Index second = 0;
  double observed = 0.0;
  Interval bootstrap;
  double copula_mean = 0.0;
  Interval copula;
  double comparator_mean = 0.0;
  Interval comparator;
};

struct ScoreSummary {
  std::string id;
  double mean = 0.0;
  Interval hpd;
  double rescaled_mean = 0.0;  // posterior means mapped affinely onto [0, 1]
  Interval rescaled_hpd;
};

struct QuinnReport {
  PosteriorDraws copula;
  PosteriorDraws comparator;
  Index gdpw = 0;
  Index bmp = 0;
  ParameterSummary copula_correlation;
  ParameterSummary comparator_correlation;
  std::vector<TauCheck> taus;
  std::vector<ScoreSummary> scores;
};

/// Log for the GDP column, log(x + 0.001) for the black market premium,
/// identity elsewhere.
inline std::vector<ColumnTransform> quinn_transforms(const std::vector<std::string>& labels) {
  std::vector<ColumnTransform> out(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == kGdpwLabel) out[j] = {TransformKind::Log, 0.0};
    if (labels[j] == kBmpLabel) out[j] = {TransformKind::LogShift, 0.001};
  }
  return out;
}

namespace detail {

inline std::optional<double> pairwise_tau(const Eigen::MatrixXd& y, const MissingMask* missing, Index a, Index b) {
  std::vector<double> x, z;
  for (Index i = 0; i < y.rows(); ++i) {
    if (missing && ((*missing)(i, a) || (*missing)(i, b))) continue;
    x.push_back(y(i, a));
    z.push_back(y(i, b));
  }
  if (x.size() < 2) return std::nullopt;
  return kendall_tau(x, z);
}

inline std::pair<double, Interval> mean_and_interval(std::vector<double> v, double level) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), {}};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  return {m, central_interval(v, level)};
}

// Kendall's tau of every variable pair across datasets of the observed size
// simulated from evenly spaced retained draws.
inline std::vector<std::vector<double>> predictive_taus(RngStream& rng, const PosteriorDraws& draws,
                                                        const std::vector<EmpiricalCdf>& cdfs, Index rows,
                                                        Index datasets) {
  const Index p = draws.variables;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(p * (p - 1) / 2));
  datasets = std::min(datasets, draws.size());
  Eigen::MatrixXd y(rows, p);
  Eigen::VectorXd eta(draws.factors);
  for (Index s = 0; s < datasets; ++s) {
    const Index t = s * draws.size() / datasets;
    const Eigen::MatrixXd l = draws.scaled_loadings(t);
    const Eigen::VectorXd u = draws.uniqueness_at(t);
    for (Index i = 0; i < rows; ++i) {
      for (Index h = 0; h < draws.factors; ++h) eta(h) = rng.normal();
      for (Index j = 0; j < p; ++j)
        y(i, j) = predictive_value(draws, t, j, l.row(j).dot(eta) + std::sqrt(u(j)) * rng.normal(),
                                   cdfs[static_cast<std::size_t>(j)]);
    }
    std::size_t pair = 0;
    for (Index a = 0; a < p; ++a)
      for (Index b = a + 1; b < p; ++b, ++pair)
        if (const auto tau = pairwise_tau(y, nullptr, a, b)) out[pair].push_back(*tau);
  }
  return out;
}

}  // namespace detail

inline QuinnReport quinn_replication(const IngestedData& input, const QuinnConfig& cfg, RunControl control = {}) {
  const auto& data = input.data;
  const auto labels = data.labels();
  QuinnReport r;
  r.gdpw = input.column_index(kGdpwLabel);
  r.bmp = input.column_index(kBmpLabel);

  McmcConfig mc = cfg.mcmc;
  mc.store_scores = true;
  r.copula = run_chain(data, mc, control);
  mc.store_scores = false;
  r.comparator = mixed_fm_sampler(apply_transforms(data, quinn_transforms(labels)), mc, control);
  r.copula_correlation = summarize(r.copula.correlation_trace(r.gdpw, r.bmp), labels[r.gdpw] + "~" + labels[r.bmp]);
  r.comparator_correlation =
      summarize(r.comparator.correlation_trace(r.gdpw, r.bmp), labels[r.gdpw] + "~" + labels[r.bmp]);

  RngStream rng(cfg.seed, 1);
  const auto cdfs = empirical_cdfs(data);
  const auto copula_taus = detail::predictive_taus(rng, r.copula, cdfs, data.rows(), cfg.predictive_datasets);
  const auto comparator_taus = detail::predictive_taus(rng, r.comparator, cdfs, data.rows(), cfg.predictive_datasets);
  const Index p = data.cols();
  const Index n = data.rows();
  std::size_t pair = 0;
  for (Index a = 0; a < p; ++a)
    for (Index b = a + 1; b < p; ++b, ++pair) {
      TauCheck c;
      c.first = a;
      c.second = b;
      c.observed = detail::pairwise_tau(data.values(), &data.missing(), a, b).value_or(0.0);
      std::vector<double> boot;
      Eigen::MatrixXd yb(n, 2);
      MissingMask mb(n, 2);
      for (int s = 0; s < cfg.bootstrap; ++s) {
        for (Index i = 0; i < n; ++i) {
          const Index src = static_cast<Index>(rng.uniform() * static_cast<double>(n));
          yb(i, 0) = data(src, a);
          yb(i, 1) = data(src, b);
          mb(i, 0) = data.is_missing(src, a);
          mb(i, 1) = data.is_missing(src, b);
        }
        if (const auto tau = detail::pairwise_tau(yb, &mb, 0, 1)) boot.push_back(*tau);
      }
      if (!boot.empty()) c.bootstrap = central_interval(boot, cfg.level);
      std::tie(c.copula_mean, c.copula) = detail::mean_and_interval(copula_taus[pair], cfg.level);
      std::tie(c.comparator_mean, c.comparator) = detail::mean_and_interval(comparator_taus[pair], cfg.level);
      r.taus.push_back(c);
    }

  if (r.copula.scores.size() > 0) {
    const Index k = r.copula.factors;
    std::vector<ScoreSummary> scores(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const Eigen::VectorXd trace = r.copula.scores.col(i * k);
      auto& s = scores[static_cast<std::size_t>(i)];
      s.id = input.ids.empty() ? "row" + std::to_string(i + 1) : input.ids[static_cast<std::size_t>(i)];
      s.mean = trace.mean();
      s.hpd = hpd_interval(std::span<const double>(trace.data(), static_cast<std::size_t>(trace.size())), 0.90);
    }
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end(),
                                              [](const auto& x, const auto& y) { return x.mean < y.mean; });
    const double base = lo->mean;
    const double span = hi->mean - lo->mean;
    for (auto& s : scores) {
      const double scale = span > 0.0 ? span : 1.0;
      s.rescaled_mean = (s.mean - base) / scale;
      s.rescaled_hpd = {(s.hpd.lower - base) / scale, (s.hpd.upper - base) / scale};
    }
    r.scores = std::move(scores);
  }
  return r;
}

}  // namespace gcfa
