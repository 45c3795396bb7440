#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/data.hpp"
#include "gcfa/draws.hpp"
#include "gcfa/error.hpp"
#include "gcfa/factor_algebra.hpp"
#include "gcfa/stochastic.hpp"

namespace gcfa {

struct ChainCounters {
  long px_floor_hits = 0;    // s_j floored at a small positive value
  long px_rejections = 0;    // scale moves rejected under the sign constraint
  long px_proposals = 0;
};

/// Complete sampler state. Latent data is n x p, scores k x n.
struct ChainState {
  Eigen::MatrixXd latent;          // Z
  Eigen::MatrixXd scores;          // H, column i is eta_i
  Eigen::MatrixXd loadings;        // Lambda, unscaled, p x k
  Eigen::MatrixXd local_variance;  // psi_jh
  Eigen::MatrixXd local_rate;      // xi_jh
  Eigen::VectorXd expansion;       // v_j^2
  ChainCounters counters;

  Eigen::Index observations() const { return latent.rows(); }
  Eigen::Index variables() const { return latent.cols(); }
  Eigen::Index factors() const { return loadings.cols(); }
};

// Number of free loadings in row j.
inline Eigen::Index free_loadings(Eigen::Index j, Eigen::Index k, Identification id) {
  return id == Identification::Unconstrained ? k : std::min(k, j + 1);
}

// Row j has its last free element constrained positive.
inline bool has_positive_diagonal(Eigen::Index j, Eigen::Index k, Identification id) {
  return id == Identification::LowerTriangularPositiveDiag && j < k;
}

inline double prior_variance(const ChainState& s, const LoadingsPrior& prior, Eigen::Index j, Eigen::Index h) {
  if (const auto* n = std::get_if<NormalParams>(&prior)) return 1.0 / n->precision;
  return s.local_variance(j, h);
}

/// Gaussian full conditional of the free elements of one loadings row:
/// precision Psi_j^-1 + H_j H_j' / sigma^2 and mean precision^-1 H_j z_j / sigma^2.
struct LoadingRowConditional {
  Eigen::Index free = 0;
  Eigen::MatrixXd precision;
  Eigen::LLT<Eigen::MatrixXd> factor;
  Eigen::VectorXd projection;  // H_j z_j / sigma^2
  Eigen::VectorXd mean;

  // Marginal variance of the last free element.
  double last_variance() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(free);
    e(free - 1) = 1.0;
    return factor.solve(e)(free - 1);
  }
};

inline LoadingRowConditional loading_row_conditional(const ChainState& s, const McmcConfig& config,
                                                     const Eigen::MatrixXd& scores_gram, Eigen::Index j,
                                                     double noise_variance = 1.0) {
  LoadingRowConditional c;
  c.free = free_loadings(j, s.factors(), config.identification);
  c.precision = scores_gram.topLeftCorner(c.free, c.free) / noise_variance;
  for (Eigen::Index h = 0; h < c.free; ++h) c.precision(h, h) += 1.0 / prior_variance(s, config.prior, j, h);
  c.factor.compute(c.precision);
  if (c.factor.info() != Eigen::Success)
    throw numeric_error("loadings conditional precision for row " + std::to_string(j) + " is not positive definite");
  c.projection = s.scores.topRows(c.free) * s.latent.col(j) / noise_variance;
  c.mean = c.factor.solve(c.projection);
  return c;
}

/// Draw a loadings row from N(mean, precision^-1). With a positive-diagonal
/// constraint the last free element is drawn from its truncated marginal and
/// the remaining elements from their Gaussian conditional given it, which is an
/// exact draw from the truncated joint.
inline Eigen::VectorXd draw_loading_row(RngStream& rng, const LoadingRowConditional& c, bool positive_last) {
  const Eigen::Index f = c.free;
  if (!positive_last) {
    Eigen::VectorXd eps = rng.normal_vector(f);
    return c.mean + c.factor.matrixU().solve(eps);
  }
  Eigen::VectorXd out(f);
  const Eigen::Index d = f - 1;
  out(d) = sample_truncated_normal(rng, c.mean(d), c.last_variance(), 0.0, std::numeric_limits<double>::infinity());
  if (d > 0) {
    const Eigen::MatrixXd p_oo = c.precision.topLeftCorner(d, d);
    const Eigen::LLT<Eigen::MatrixXd> llt(p_oo);
    const Eigen::VectorXd shift = llt.solve(c.precision.block(0, d, d, 1) * (out(d) - c.mean(d)));
    Eigen::VectorXd eps = rng.normal_vector(d);
    out.head(d) = c.mean.head(d) - shift + llt.matrixU().solve(eps);
  }
  return out;
}

// ---------------------------------------------------------------------------

inline void update_shrinkage(ChainState& s, RngStream& rng, const McmcConfig& config);
inline void update_scores(ChainState& s, RngStream& rng);

/// Leading k principal components of the correlation of z, rows shrunk to
/// squared norm at most 0.9, rotated to lower-triangular form with a positive
/// diagonal when identified that way, and returned on the unscaled scale.
inline Eigen::MatrixXd initial_loadings(const Eigen::MatrixXd& z, Eigen::Index k, Identification id) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
  Eigen::MatrixXd corr = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  const Eigen::VectorXd inv_sd = corr.diagonal().cwiseSqrt().cwiseInverse();
  corr = inv_sd.asDiagonal() * corr * inv_sd.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  Eigen::MatrixXd l(p, k);
  for (Eigen::Index h = 0; h < k; ++h)
    l.col(h) = es.eigenvectors().col(p - 1 - h) * std::sqrt(std::max(es.eigenvalues()(p - 1 - h), 0.0));
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm2 = l.row(j).squaredNorm();
    if (norm2 > 0.9) l.row(j) *= std::sqrt(0.9 / norm2);
  }
  if (id == Identification::LowerTriangularPositiveDiag) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(l.topRows(k).transpose());
    l = l * Eigen::MatrixXd(qr.householderQ());
    for (Eigen::Index h = 0; h < k; ++h) {
      if (l(h, h) < 0.0) l.col(h) *= -1.0;
      if (!(l(h, h) > 1e-3)) l(h, h) = 1e-3;
      for (Eigen::Index c = h + 1; c < k; ++c) l(h, c) = 0.0;
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) l.row(j) /= std::sqrt(std::max(1.0 - l.row(j).squaredNorm(), 0.1));
  return l;
}

inline ChainState init_state(RngStream& rng, const MixedDataMatrix& data, const TieGroups& ties,
                             const McmcConfig& config) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  const Eigen::Index k = config.factors;
  ChainState s;
  s.latent.resize(n, p);
  // Mid-rank normal scores, strictly increasing across tie groups.
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& col = ties.column(j);
    const double denom = static_cast<double>(data.observed_count(j)) + 1.0;
    double below = 0.0;
    for (const auto& g : col) {
      const double size = static_cast<double>(g.rows.size());
      const double z = normal_quantile((below + 0.5 * (size + 1.0)) / denom);
      for (Eigen::Index i : g.rows) s.latent(i, j) = z;
      below += size;
    }
    for (Eigen::Index i : col.missing) s.latent(i, j) = rng.normal();
  }
  // A prior draw for the loadings can start the chain in a sign-flipped local
  // mode of the constrained posterior, so start from principal components.
  s.loadings = initial_loadings(s.latent, k, config.identification);
  s.local_variance = Eigen::MatrixXd::Ones(p, k);
  s.local_rate = Eigen::MatrixXd::Ones(p, k);
  if (const auto* nrm = std::get_if<NormalParams>(&config.prior))
    s.local_variance.setConstant(1.0 / nrm->precision);
  update_shrinkage(s, rng, config);
  update_scores(s, rng);
  s.expansion = Eigen::VectorXd::Ones(p);
  return s;
}

/// Parameter-expansion scale move for every row, using the working prior
/// 1/v^2 ~ Ga(n0/2, n0/2) (n0 = 0 is the improper limit). Each latent column is
/// rescaled by r = v_old / v_new, so the loadings mean drawn next is r times the
/// pre-move mean. Returns the applied ratios.
inline Eigen::VectorXd update_px_scales(ChainState& s, RngStream& rng, const McmcConfig& config) {
  const Eigen::Index n = s.observations();
  const Eigen::Index p = s.variables();
  const Eigen::Index k = s.factors();
  const double n0 = config.px_prior_df;
  const Eigen::MatrixXd gram = s.scores * s.scores.transpose();
  Eigen::VectorXd ratios = Eigen::VectorXd::Ones(p);
  constexpr double kFloor = 1e-10;
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto c = loading_row_conditional(s, config, gram, j);
    double quad = s.latent.col(j).squaredNorm() - c.projection.dot(c.mean);
    if (!(quad > kFloor)) {
      quad = kFloor;
      ++s.counters.px_floor_hits;
    }
    double old_v2 = s.expansion(j);
    double new_v2 = 0.0;
    if (n0 == 0.0) {
      new_v2 = old_v2 * quad / (2.0 * rng.gamma(0.5 * static_cast<double>(n), 1.0));
    } else {
      old_v2 = 1.0 / rng.gamma(0.5 * n0, 0.5 * n0);
      new_v2 = 1.0 / rng.gamma(0.5 * (n0 + static_cast<double>(n)), 0.5 * (n0 + old_v2 * quad));
    }
    double r = std::sqrt(old_v2 / new_v2);
    ++s.counters.px_proposals;
    if (has_positive_diagonal(j, k, config.identification)) {
      // The sign constraint makes the marginal of z_j carry P(lambda_jj > 0 | z_j);
      // correct for it with an independence Metropolis step on the scale.
      const double mu = c.mean(c.free - 1) / std::sqrt(c.last_variance());
      const double log_ratio = log_normal_cdf(r * mu) - log_normal_cdf(mu);
      if (log_ratio < 0.0 && std::log(rng.uniform()) > log_ratio) {
        ++s.counters.px_rejections;
        r = 1.0;
        new_v2 = old_v2;
      }
    }
    s.latent.col(j) *= r;
    s.expansion(j) = new_v2;
    ratios(j) = r;
  }
  return ratios;
}

inline void update_loadings(ChainState& s, RngStream& rng, const McmcConfig& config) {
  const Eigen::Index k = s.factors();
  const Eigen::MatrixXd gram = s.scores * s.scores.transpose();
  for (Eigen::Index j = 0; j < s.variables(); ++j) {
    const auto c = loading_row_conditional(s, config, gram, j);
    const Eigen::VectorXd row = draw_loading_row(rng, c, has_positive_diagonal(j, k, config.identification));
    s.loadings.row(j).setZero();
    s.loadings.row(j).head(c.free) = row.transpose();
  }
}

/// GDP mixture locals: xi | lambda ~ Ga(alpha + 1, beta + |lambda|), then
/// 1/psi | lambda, xi ~ InvGauss(|xi / lambda|, xi^2). A loading at exactly zero
/// (including structural zeros) takes psi from its prior Exp(xi^2 / 2).
inline void update_shrinkage(ChainState& s, RngStream& rng, const McmcConfig& config) {
  const auto* gdp = std::get_if<GdpParams>(&config.prior);
  if (!gdp) return;
  const Eigen::Index k = s.factors();
  for (Eigen::Index j = 0; j < s.variables(); ++j) {
    const Eigen::Index f = free_loadings(j, k, config.identification);
    for (Eigen::Index h = 0; h < k; ++h) {
      const double a = std::abs(s.loadings(j, h));
      const double xi = h < f ? rng.gamma(gdp->alpha + 1.0, gdp->beta + a) : rng.gamma(gdp->alpha, gdp->beta);
      double psi = 0.0;
      const double ig_mean = xi / a;
      if (a == 0.0 || !std::isfinite(ig_mean)) psi = rng.exponential(0.5 * xi * xi);
      else psi = 1.0 / sample_inverse_gaussian(rng, ig_mean, xi * xi);
      s.local_rate(j, h) = xi;
      s.local_variance(j, h) = std::clamp(psi, 1e-200, 1e200);
    }
  }
}

/// eta_i ~ N(A^-1 Lambda' z_i, A^-1) with A = Lambda' Lambda + I.
inline void update_scores(ChainState& s, RngStream& rng) {
  const Eigen::Index k = s.factors();
  const Eigen::Index n = s.observations();
  Eigen::MatrixXd a = s.loadings.transpose() * s.loadings;
  a.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  Eigen::MatrixXd eps(k, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index h = 0; h < k; ++h) eps(h, i) = rng.normal();
  s.scores = llt.solve(s.loadings.transpose() * s.latent.transpose()) + llt.matrixU().solve(eps);
}

/// z_ij ~ TN(lambda_j' eta_i, 1, z^l, z^u) between the neighbouring tie groups;
/// missing cells are drawn without truncation. Columns are conditionally
/// independent, so no p x p system appears.
inline void update_latent_z(ChainState& s, const TieGroups& ties, RngStream& rng) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd means = s.scores.transpose() * s.loadings.transpose();  // n x p
  for (Eigen::Index j = 0; j < s.variables(); ++j) {
    auto z = s.latent.col(j);
    const auto m = means.col(j);
    const auto& col = ties.column(j);
    double lower = -kInf;
    for (std::size_t g = 0; g < col.size(); ++g) {
      double upper = kInf;
      if (g + 1 < col.size())
        for (Eigen::Index i : col[g + 1].rows) upper = std::min(upper, z(i));
      double group_max = -kInf;
      for (Eigen::Index i : col[g].rows) {
        z(i) = sample_truncated_normal(rng, m(i), 1.0, lower, upper);
        group_max = std::max(group_max, z(i));
      }
      lower = group_max;
    }
    for (Eigen::Index i : col.missing) z(i) = m(i) + rng.normal();
  }
}

namespace detail {
inline void assert_ranks(const ChainState& s, const TieGroups& ties, const char* step) {
  if (!respects_ranks(s.latent, ties))
    throw numeric_error(std::string("latent data left its rank set after ") + step);
}
}  // namespace detail

/// One scan: PX scales, loadings, shrinkage locals, scores, latent data.
inline void sweep(ChainState& s, const TieGroups& ties, RngStream& rng, const McmcConfig& config) {
  if (config.px_enabled) {
    update_px_scales(s, rng, config);
    if (config.check_ranks) detail::assert_ranks(s, ties, "the PX scale update");
  }
  update_loadings(s, rng, config);
  update_shrinkage(s, rng, config);
  update_scores(s, rng);
  update_latent_z(s, ties, rng);
  if (config.check_ranks) detail::assert_ranks(s, ties, "the latent data update");
}

struct RunControl {
  // Polled once per sweep; a set flag ends the run with the draws so far.
  const std::atomic<bool>* stop = nullptr;
};

inline PosteriorDraws run_chain(const MixedDataMatrix& data, const McmcConfig& config, RunControl control = {}) {
  config.validate(data.cols());
  const auto start = std::chrono::steady_clock::now();
  const TieGroups ties = build_tie_groups(data);
  RngStream rng(config.seed);
  ChainState state = init_state(rng, data, ties, config);

  PosteriorDraws draws;
  draws.variables = data.cols();
  draws.factors = config.factors;
  draws.observations = data.rows();
  draws.labels = data.labels();
  draws.config = config;
  draws.reserve(config.retained(), config.store_scores);

  Eigen::Index kept = 0;
  const long total = static_cast<long>(config.burnin) + config.iterations;
  for (long t = 0; t < total; ++t) {
    if (control.stop && control.stop->load(std::memory_order_relaxed)) {
      draws.interrupted = true;
      break;
    }
    sweep(state, ties, rng, config);
    const long post = t - config.burnin + 1;
    if (post > 0 && post % config.thin == 0 && kept < draws.loadings.rows()) {
      draws.store(kept, scale_loadings(state.loadings), config.store_scores ? &state.scores : nullptr);
      ++kept;
    }
  }
  draws.truncate(kept);
  draws.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return draws;
}

}  // namespace gcfa
