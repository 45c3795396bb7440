#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/data.hpp"
#include "gcfa/draws.hpp"
#include "gcfa/gibbs.hpp"
#include "gcfa/stochastic.hpp"

namespace gcfa {

// Gaussian factor model y = Lambda eta + eps for continuous columns, ordinal
// probit with free cutpoints for discrete ones. Continuous columns are
// standardised first; 1/sigma_j^2 ~ Ga(2, 2); cutpoints have a flat prior.
namespace detail {

struct ParametricState {
  ChainState chain;
  Eigen::VectorXd noise_variance;
  std::vector<bool> gaussian;
  std::vector<std::vector<double>> cutpoints;  // per probit column, size groups + 1
  long proposals = 0;
  long accepted = 0;
};

// Proposal for cutpoint c of a probit column: the empirical-cdf normal score,
// scaled to the marginal latent sd, with twice the delta-method sd of a sample
// quantile.
struct CutpointProposal {
  double center = 0.0;
  double spread = 1.0;
};

inline CutpointProposal cutpoint_proposal(double proportion, double count, double latent_sd) {
  const double q = normal_quantile(proportion);
  const double sd = std::sqrt(proportion * (1.0 - proportion) / count) / normal_pdf(q);
  return {q * latent_sd, 2.0 * sd * latent_sd};
}

inline double log_group_likelihood(const std::vector<Index>& rows, const Eigen::VectorXd& means, double lo, double hi) {
  double acc = 0.0;
  for (Index i : rows) acc += std::log(normal_interval_prob(lo - means(i), hi - means(i)));
  return acc;
}

inline double log_normal_kernel(double x, const CutpointProposal& q) {
  const double d = (x - q.center) / q.spread;
  return -0.5 * d * d;
}

inline void update_probit_column(ParametricState& s, const TieGroups& ties, Index j, const Eigen::VectorXd& means,
                                 RngStream& rng) {
  const auto& col = ties.column(j);
  auto& gamma = s.cutpoints[static_cast<std::size_t>(j)];
  double observed = 0.0;
  for (const auto& g : col) observed += static_cast<double>(g.rows.size());
  const double latent_sd = std::sqrt(1.0 + s.chain.loadings.row(j).squaredNorm());
  double below = 0.0;
  for (std::size_t c = 1; c < col.size(); ++c) {
    below += static_cast<double>(col[c - 1].rows.size());
    const auto proposal = cutpoint_proposal(below / observed, observed, latent_sd);
    const double candidate = proposal.center + proposal.spread * rng.normal();
    ++s.proposals;
    if (!(candidate > gamma[c - 1] && candidate < gamma[c + 1])) continue;
    const double current = gamma[c];
    const double log_ratio = log_group_likelihood(col[c - 1].rows, means, gamma[c - 1], candidate) +
                             log_group_likelihood(col[c].rows, means, candidate, gamma[c + 1]) -
                             log_group_likelihood(col[c - 1].rows, means, gamma[c - 1], current) -
                             log_group_likelihood(col[c].rows, means, current, gamma[c + 1]) +
                             log_normal_kernel(current, proposal) - log_normal_kernel(candidate, proposal);
    if (std::log(rng.uniform()) < log_ratio) {
      gamma[c] = candidate;
      ++s.accepted;
    }
  }
  auto z = s.chain.latent.col(j);
  for (std::size_t g = 0; g < col.size(); ++g)
    for (Index i : col[g].rows) z(i) = sample_truncated_normal(rng, means(i), 1.0, gamma[g], gamma[g + 1]);
  for (Index i : col.missing) z(i) = means(i) + rng.normal();
}

inline void parametric_sweep(ParametricState& s, const TieGroups& ties, RngStream& rng, const McmcConfig& config) {
  auto& c = s.chain;
  const Index n = c.observations();
  const Index p = c.variables();
  const Index k = c.factors();
  const Eigen::MatrixXd gram = c.scores * c.scores.transpose();
  for (Index j = 0; j < p; ++j) {
    const auto cond = loading_row_conditional(c, config, gram, j, s.noise_variance(j));
    const Eigen::VectorXd row = draw_loading_row(rng, cond, has_positive_diagonal(j, k, config.identification));
    c.loadings.row(j).setZero();
    c.loadings.row(j).head(cond.free) = row.transpose();
  }
  update_shrinkage(c, rng, config);

  for (Index j = 0; j < p; ++j) {
    if (!s.gaussian[static_cast<std::size_t>(j)]) continue;
    const double rss = (c.latent.col(j) - c.scores.transpose() * c.loadings.row(j).transpose()).squaredNorm();
    s.noise_variance(j) = 1.0 / rng.gamma(2.0 + 0.5 * static_cast<double>(n), 2.0 + 0.5 * rss);
  }

  const Eigen::VectorXd inv_noise = s.noise_variance.cwiseInverse();
  Eigen::MatrixXd a = c.loadings.transpose() * inv_noise.asDiagonal() * c.loadings;
  a.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  Eigen::MatrixXd eps(k, n);
  for (Index i = 0; i < n; ++i)
    for (Index h = 0; h < k; ++h) eps(h, i) = rng.normal();
  c.scores = llt.solve(c.loadings.transpose() * inv_noise.asDiagonal() * c.latent.transpose()) +
             llt.matrixU().solve(eps);

  const Eigen::MatrixXd means = c.scores.transpose() * c.loadings.transpose();
  for (Index j = 0; j < p; ++j) {
    const Eigen::VectorXd m = means.col(j);
    if (s.gaussian[static_cast<std::size_t>(j)]) {
      const double sd = std::sqrt(s.noise_variance(j));
      for (Index i : ties.column(j).missing) c.latent(i, j) = m(i) + sd * rng.normal();
    } else {
      update_probit_column(s, ties, j, m, rng);
    }
  }
}

inline PosteriorDraws run_parametric(const MixedDataMatrix& data, McmcConfig config, const std::string& model,
                                     RunControl control) {
  config.px_enabled = false;
  config.validate(data.cols());
  const auto start = std::chrono::steady_clock::now();
  const TieGroups ties = build_tie_groups(data);
  RngStream rng(config.seed);
  const Index n = data.rows();
  const Index p = data.cols();

  ParametricState s;
  s.chain = init_state(rng, data, ties, config);
  s.noise_variance = Eigen::VectorXd::Ones(p);
  s.cutpoints.resize(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    const bool g = !data.margin(j).discrete();
    s.gaussian.push_back(g);
    const auto& col = ties.column(j);
    if (g) {
      double mean = 0.0, sq = 0.0;
      const double m = static_cast<double>(data.observed_count(j));
      for (const auto& grp : col)
        for (Index i : grp.rows) mean += data(i, j) / m;
      for (const auto& grp : col)
        for (Index i : grp.rows) sq += (data(i, j) - mean) * (data(i, j) - mean);
      const double sd = std::sqrt(sq / std::max(m - 1.0, 1.0));
      for (const auto& grp : col)
        for (Index i : grp.rows) s.chain.latent(i, j) = (data(i, j) - mean) / sd;
    } else {
      auto& gamma = s.cutpoints[static_cast<std::size_t>(j)];
      gamma.assign(col.size() + 1, 0.0);
      gamma.front() = -std::numeric_limits<double>::infinity();
      gamma.back() = std::numeric_limits<double>::infinity();
      for (std::size_t c = 1; c < col.size(); ++c)
        gamma[c] = 0.5 * (s.chain.latent(col[c - 1].rows.front(), j) + s.chain.latent(col[c].rows.front(), j));
    }
  }

  PosteriorDraws draws;
  draws.variables = p;
  draws.factors = config.factors;
  draws.observations = n;
  draws.labels = data.labels();
  draws.model = model;
  draws.config = config;
  draws.reserve(config.retained(), config.store_scores);
  draws.cutpoints.resize(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j)
    if (!s.gaussian[static_cast<std::size_t>(j)])
      draws.cutpoints[static_cast<std::size_t>(j)].resize(config.retained(),
                                                          static_cast<Index>(ties.column(j).size()) - 1);
  Index kept = 0;
  const long total = static_cast<long>(config.burnin) + config.iterations;
  for (long t = 0; t < total; ++t) {
    if (control.stop && control.stop->load(std::memory_order_relaxed)) {
      draws.interrupted = true;
      break;
    }
    parametric_sweep(s, ties, rng, config);
    const long post = t - config.burnin + 1;
    if (post > 0 && post % config.thin == 0 && kept < draws.loadings.rows()) {
      draws.store(kept, scale_loadings(s.chain.loadings, s.noise_variance),
                  config.store_scores ? &s.chain.scores : nullptr);
      for (Index j = 0; j < p; ++j) {
        auto& cuts = draws.cutpoints[static_cast<std::size_t>(j)];
        const double scale = std::sqrt(1.0 + s.chain.loadings.row(j).squaredNorm());
        for (Index c = 0; c < cuts.cols(); ++c) cuts(kept, c) = s.cutpoints[static_cast<std::size_t>(j)][static_cast<std::size_t>(c + 1)] / scale;
      }
      ++kept;
    }
  }
  draws.truncate(kept);
  if (s.proposals > 0) draws.cutpoint_acceptance = static_cast<double>(s.accepted) / static_cast<double>(s.proposals);
  draws.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return draws;
}

}  // namespace detail

/// Gaussian factor model; every margin must be continuous.
inline PosteriorDraws gaussian_fm_sampler(const MixedDataMatrix& data, const McmcConfig& config,
                                          RunControl control = {}) {
  for (Index j = 0; j < data.cols(); ++j)
    if (data.margin(j).discrete())
      throw input_error("Gaussian factor model needs continuous margins; column " + data.labels()[j] + " is discrete");
  return detail::run_parametric(data, config, "gaussian", control);
}

/// Ordinal probit factor model; every margin must be ordinal or binary.
inline PosteriorDraws probit_fm_sampler(const MixedDataMatrix& data, const McmcConfig& config,
                                        RunControl control = {}) {
  for (Index j = 0; j < data.cols(); ++j)
    if (!data.margin(j).discrete())
      throw input_error("probit factor model needs discrete margins; column " + data.labels()[j] + " is continuous");
  return detail::run_parametric(data, config, "probit", control);
}

/// Mixed Gaussian/probit factor model.
inline PosteriorDraws mixed_fm_sampler(const MixedDataMatrix& data, const McmcConfig& config,
                                       RunControl control = {}) {
  return detail::run_parametric(data, config, "gaussian-probit", control);
}

}  // namespace gcfa
