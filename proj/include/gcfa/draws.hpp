#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/error.hpp"
#include "gcfa/factor_algebra.hpp"
#include "gcfa/stochastic.hpp"

namespace gcfa {

enum class Identification { Unconstrained, LowerTriangularPositiveDiag };

struct McmcConfig {
  int iterations = 20000;  // post burn-in sweeps
  int burnin = 2000;
  int thin = 10;
  int factors = 1;
  std::uint64_t seed = 1;
  LoadingsPrior prior = GdpParams{};
  Identification identification = Identification::LowerTriangularPositiveDiag;
  bool px_enabled = true;
  // Working prior 1/v^2 ~ Ga(n0/2, n0/2); 0 selects the improper limit.
  double px_prior_df = 0.0;
  bool store_scores = false;
  // Assert Z stays inside its rank set after every update.
  bool check_ranks = false;

  void validate(Eigen::Index variables) const {
    if (iterations < 1 || burnin < 0 || thin < 1) throw input_error("need iterations >= 1, burnin >= 0, thin >= 1");
    if (burnin >= iterations) throw input_error("burn-in must be shorter than the run");
    if (factors < 1) throw input_error("need at least one factor");
    if (factors >= variables)
      throw input_error("factor count " + std::to_string(factors) + " must be below the variable count " +
                        std::to_string(variables));
    if (px_prior_df < 0.0) throw input_error("PX prior degrees of freedom must be >= 0");
    std::visit([](const auto& p) { p.validate(); }, prior);
  }

  Eigen::Index retained() const { return iterations / thin; }
};

/// Retained posterior draws on the correlation scale. Loadings are stored flat,
/// one row per draw with entry (j, h) at column j * k + h.
struct PosteriorDraws {
  Eigen::Index variables = 0;
  Eigen::Index factors = 0;
  Eigen::Index observations = 0;
  std::vector<std::string> labels;
  std::string model = "copula";
  McmcConfig config;
  Eigen::MatrixXd loadings;
  Eigen::MatrixXd uniqueness;
  // Factor scores, entry (i, h) at column i * k + h. Empty unless requested.
  Eigen::MatrixXd scores;
  // Probit models only: per variable, draws x interior cutpoints on the unit
  // latent-variance scale. Empty for continuous columns and copula draws.
  std::vector<Eigen::MatrixXd> cutpoints;
  double wall_seconds = 0.0;
  bool interrupted = false;
  double cutpoint_acceptance = std::numeric_limits<double>::quiet_NaN();

  Eigen::Index size() const { return loadings.rows(); }

  void reserve(Eigen::Index draws, bool with_scores) {
    loadings.resize(draws, variables * factors);
    uniqueness.resize(draws, variables);
    if (with_scores) scores.resize(draws, observations * factors);
  }

  void store(Eigen::Index t, const ScaledLoadings& s, const Eigen::MatrixXd* factor_scores = nullptr) {
    for (Eigen::Index j = 0; j < variables; ++j)
      for (Eigen::Index h = 0; h < factors; ++h) loadings(t, j * factors + h) = s.scaled(j, h);
    uniqueness.row(t) = s.uniqueness.transpose();
    if (factor_scores && scores.rows() > t)
      for (Eigen::Index i = 0; i < observations; ++i)
        for (Eigen::Index h = 0; h < factors; ++h) scores(t, i * factors + h) = (*factor_scores)(h, i);
  }

  void truncate(Eigen::Index draws) {
    loadings.conservativeResize(draws, Eigen::NoChange);
    uniqueness.conservativeResize(draws, Eigen::NoChange);
    if (scores.size() > 0) scores.conservativeResize(draws, Eigen::NoChange);
    for (auto& c : cutpoints) c.conservativeResize(draws, Eigen::NoChange);
  }

  bool has_cutpoints(Eigen::Index j) const {
    return static_cast<std::size_t>(j) < cutpoints.size() && cutpoints[static_cast<std::size_t>(j)].cols() > 0;
  }

  Eigen::MatrixXd scaled_loadings(Eigen::Index t) const {
    Eigen::MatrixXd out(variables, factors);
    for (Eigen::Index j = 0; j < variables; ++j)
      for (Eigen::Index h = 0; h < factors; ++h) out(j, h) = loadings(t, j * factors + h);
    return out;
  }

  Eigen::VectorXd uniqueness_at(Eigen::Index t) const { return uniqueness.row(t).transpose(); }

  Eigen::MatrixXd correlation(Eigen::Index t) const {
    return correlation_from_loadings(scaled_loadings(t), uniqueness_at(t)).values;
  }

  Eigen::VectorXd loading_trace(Eigen::Index j, Eigen::Index h) const { return loadings.col(j * factors + h); }

  Eigen::VectorXd correlation_trace(Eigen::Index j, Eigen::Index l) const {
    Eigen::VectorXd out(size());
    for (Eigen::Index t = 0; t < size(); ++t) {
      double c = j == l ? uniqueness(t, j) : 0.0;
      for (Eigen::Index h = 0; h < factors; ++h) c += loadings(t, j * factors + h) * loadings(t, l * factors + h);
      out(t) = c;
    }
    return out;
  }

  // Average of the per-draw correlation matrices.
  Eigen::MatrixXd mean_correlation() const {
    if (size() == 0) throw input_error("no retained draws");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(variables, variables);
    for (Eigen::Index t = 0; t < size(); ++t) acc += correlation(t);
    return acc / static_cast<double>(size());
  }

  Eigen::MatrixXd mean_scaled_loadings() const {
    Eigen::MatrixXd out(variables, factors);
    const Eigen::RowVectorXd m = loadings.colwise().mean();
    for (Eigen::Index j = 0; j < variables; ++j)
      for (Eigen::Index h = 0; h < factors; ++h) out(j, h) = m(j * factors + h);
    return out;
  }
};

}  // namespace gcfa
