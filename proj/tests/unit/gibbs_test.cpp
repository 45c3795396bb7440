#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "gcfa/gibbs.hpp"
#include "gcfa/simulation.hpp"

using namespace gcfa;

namespace {

SyntheticData mixed_data(std::uint64_t seed, Index n = 150, Index p = 6, Index k = 2) {
  RngStream rng(seed);
  SyntheticSpec spec;
  spec.n = n;
  spec.p = p;
  spec.k = k;
  spec.margins.clear();
  for (Index j = 0; j < p; ++j)
    spec.margins.push_back(j % 2 == 0 ? MarginGenerator{GaussianMargin{}} : MarginGenerator{OrdinalDirichletMargin{}});
  return generate_synthetic(rng, spec);
}

McmcConfig short_config(int k = 2) {
  McmcConfig c;
  c.iterations = 600;
  c.burnin = 100;
  c.thin = 2;
  c.factors = k;
  c.seed = 99;
  return c;
}

// One column with zero loadings: the latent update is then a Gibbs sampler for
// standard normals constrained to the column's ordering.
ChainState null_state(const std::vector<double>& y, RngStream& rng) {
  const Index n = static_cast<Index>(y.size());
  ChainState s;
  s.latent = Eigen::MatrixXd(n, 1);
  for (Index i = 0; i < n; ++i) s.latent(i, 0) = y[static_cast<std::size_t>(i)];
  s.scores = Eigen::MatrixXd::Zero(1, n);
  for (Index i = 0; i < n; ++i) s.scores(0, i) = rng.normal();
  s.loadings = Eigen::MatrixXd::Zero(1, 1);
  return s;
}

}  // namespace

TEST(LatentUpdate, DistinctValuesGiveNormalOrderStatistics) {
  RngStream rng(21);
  const std::vector<double> y{2.0, 1.0, 3.0};
  auto s = null_state(y, rng);
  const auto ties = TieGroups{{build_column_ties(y)}};
  const int sweeps = 200000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sum2 = Eigen::Vector3d::Zero();
  for (int t = 0; t < sweeps; ++t) {
    update_latent_z(s, ties, rng);
    ASSERT_TRUE(respects_ranks(s.latent, ties));
    const Eigen::Vector3d z(s.latent(1, 0), s.latent(0, 0), s.latent(2, 0));
    sum += z;
    sum2 += z.cwiseProduct(z);
  }
  // Oracle: sort three independent standard normals.
  RngStream oracle(22);
  Eigen::Vector3d osum = Eigen::Vector3d::Zero(), osum2 = Eigen::Vector3d::Zero();
  const int m = 1000000;
  for (int t = 0; t < m; ++t) {
    std::array<double, 3> v{oracle.normal(), oracle.normal(), oracle.normal()};
    std::sort(v.begin(), v.end());
    const Eigen::Vector3d z(v[0], v[1], v[2]);
    osum += z;
    osum2 += z.cwiseProduct(z);
  }
  const Eigen::Vector3d mean = sum / sweeps, omean = osum / m;
  EXPECT_NEAR(omean(2), 3.0 / (2.0 * std::sqrt(std::numbers::pi)), 0.005);
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(mean(a), omean(a), 0.02) << a;
    EXPECT_NEAR(sum2(a) / sweeps - mean(a) * mean(a), osum2(a) / m - omean(a) * omean(a), 0.03) << a;
  }
}

TEST(LatentUpdate, TiedRowsShareTheLowerPairOfOrderStatistics) {
  RngStream rng(23);
  const std::vector<double> y{1.0, 1.0, 2.0};
  auto s = null_state(y, rng);
  const auto ties = TieGroups{{build_column_ties(y)}};
  const int sweeps = 200000;
  double tied = 0.0, top = 0.0;
  for (int t = 0; t < sweeps; ++t) {
    update_latent_z(s, ties, rng);
    tied += 0.5 * (s.latent(0, 0) + s.latent(1, 0));
    top += s.latent(2, 0);
  }
  const double emax = 3.0 / (2.0 * std::sqrt(std::numbers::pi));
  EXPECT_NEAR(top / sweeps, emax, 0.02);
  EXPECT_NEAR(tied / sweeps, -0.5 * emax, 0.02);
}

TEST(LatentUpdate, MissingCellsAreUnconstrained) {
  RngStream rng(24);
  const std::vector<double> y{1.0, std::numeric_limits<double>::quiet_NaN(), 2.0};
  auto s = null_state(y, rng);
  s.latent(1, 0) = 0.0;
  const auto ties = TieGroups{{build_column_ties(y)}};
  double sum = 0.0, sum2 = 0.0;
  const int sweeps = 100000;
  for (int t = 0; t < sweeps; ++t) {
    update_latent_z(s, ties, rng);
    sum += s.latent(1, 0);
    sum2 += s.latent(1, 0) * s.latent(1, 0);
  }
  EXPECT_NEAR(sum / sweeps, 0.0, 0.02);
  EXPECT_NEAR(sum2 / sweeps, 1.0, 0.03);
}

TEST(LoadingRow, ConstrainedDrawMatchesRejectionOracle) {
  LoadingRowConditional c;
  c.free = 2;
  c.precision.resize(2, 2);
  c.precision << 2.0, 0.9, 0.9, 1.5;
  c.factor.compute(c.precision);
  c.mean = Eigen::Vector2d(0.4, -0.3);
  RngStream rng(41);
  const int n = 300000;
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sq = Eigen::Matrix2d::Zero();
  for (int t = 0; t < n; ++t) {
    const Eigen::Vector2d x = draw_loading_row(rng, c, true);
    ASSERT_GT(x(1), 0.0);
    m += x;
    sq += x * x.transpose();
  }
  m /= n;
  const Eigen::Matrix2d cov = sq / n - m * m.transpose();
  // Oracle: unconstrained draws from the Cholesky factor of the covariance,
  // kept when the last element is positive.
  const Eigen::Matrix2d sigma = c.precision.inverse();
  const Eigen::Matrix2d chol = sigma.llt().matrixL();
  RngStream orng(42);
  Eigen::Vector2d om = Eigen::Vector2d::Zero();
  Eigen::Matrix2d osq = Eigen::Matrix2d::Zero();
  int kept = 0;
  while (kept < n) {
    const Eigen::Vector2d x = c.mean + chol * Eigen::Vector2d(orng.normal(), orng.normal());
    if (x(1) <= 0.0) continue;
    om += x;
    osq += x * x.transpose();
    ++kept;
  }
  om /= n;
  const Eigen::Matrix2d ocov = osq / n - om * om.transpose();
  EXPECT_LT((m - om).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT((cov - ocov).cwiseAbs().maxCoeff(), 0.01);
}

TEST(LoadingRow, ConditionalMatchesDenseFormula) {
  const auto sim = mixed_data(3, 40, 4, 2);
  const auto ties = build_tie_groups(sim.data);
  McmcConfig cfg = short_config();
  cfg.prior = NormalParams{0.5};
  RngStream rng(5);
  const auto s = init_state(rng, sim.data, ties, cfg);
  const Eigen::MatrixXd gram = s.scores * s.scores.transpose();
  const Index j = 3;
  const auto c = loading_row_conditional(s, cfg, gram, j);
  const Eigen::MatrixXd h = s.scores;
  const Eigen::MatrixXd precision = 0.5 * Eigen::MatrixXd::Identity(2, 2) + h * h.transpose();
  const Eigen::VectorXd mean = precision.inverse() * h * s.latent.col(j);
  EXPECT_LT((c.mean - mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(loading_row_conditional(s, cfg, gram, 0).free, 1);
}

TEST(InitState, StartsInsideRankSetWithLowerTriangularLoadings) {
  const auto sim = mixed_data(4);
  const auto ties = build_tie_groups(sim.data);
  RngStream rng(6);
  const auto s = init_state(rng, sim.data, ties, short_config());
  EXPECT_TRUE(respects_ranks(s.latent, ties));
  EXPECT_EQ(s.loadings(0, 1), 0.0);
  EXPECT_GT(s.loadings(0, 0), 0.0);
  EXPECT_GT(s.loadings(1, 1), 0.0);
}

TEST(Sweep, EveryUpdateKeepsLatentDataInRankSet) {
  const auto sim = mixed_data(5);
  auto cfg = short_config();
  cfg.check_ranks = true;
  EXPECT_NO_THROW(run_chain(sim.data, cfg));
  cfg.identification = Identification::Unconstrained;
  cfg.prior = NormalParams{1.0};
  EXPECT_NO_THROW(run_chain(sim.data, cfg));
}

TEST(RunChain, RetainedDrawsSatisfyIdentities) {
  const auto sim = mixed_data(6);
  const auto d = run_chain(sim.data, short_config());
  ASSERT_EQ(d.size(), 300);
  for (Index t = 0; t < d.size(); ++t) {
    const auto l = d.scaled_loadings(t);
    const auto u = d.uniqueness_at(t);
    for (Index j = 0; j < d.variables; ++j) EXPECT_NEAR(u(j) + l.row(j).squaredNorm(), 1.0, 1e-12);
    EXPECT_EQ(l(0, 1), 0.0);
    EXPECT_GT(l(0, 0), 0.0);
    EXPECT_GT(l(1, 1), 0.0);
  }
}

TEST(RunChain, SameSeedIsBitIdentical) {
  const auto sim = mixed_data(7);
  const auto a = run_chain(sim.data, short_config());
  const auto b = run_chain(sim.data, short_config());
  EXPECT_EQ(a.loadings, b.loadings);
  EXPECT_EQ(a.uniqueness, b.uniqueness);
  auto other = short_config();
  other.seed = 100;
  EXPECT_NE(run_chain(sim.data, other).loadings, a.loadings);
}

TEST(RunChain, MonotoneTransformOfContinuousColumnLeavesDrawsUnchanged) {
  const auto sim = mixed_data(8);
  const Eigen::VectorXd x = sim.data.values().col(0);
  const Eigen::VectorXd moved = (x.array() * 0.5).exp() + 2.0 * x.array();
  const auto a = run_chain(sim.data, short_config());
  const auto b = run_chain(sim.data.with_column(0, moved), short_config());
  EXPECT_EQ(a.loadings, b.loadings);
}

TEST(RunChain, PresetStopFlagYieldsEmptyInterruptedRun) {
  const auto sim = mixed_data(9);
  std::atomic<bool> stop{true};
  const auto d = run_chain(sim.data, short_config(), RunControl{&stop});
  EXPECT_TRUE(d.interrupted);
  EXPECT_EQ(d.size(), 0);
}

TEST(RunChain, StoresScoresOnRequest) {
  const auto sim = mixed_data(10, 30, 4, 1);
  auto cfg = short_config(1);
  cfg.store_scores = true;
  const auto d = run_chain(sim.data, cfg);
  EXPECT_EQ(d.scores.rows(), d.size());
  EXPECT_EQ(d.scores.cols(), 30);
}

TEST(McmcConfig, RejectsInvalidSettings) {
  McmcConfig c;
  c.factors = 5;
  EXPECT_THROW(c.validate(5), input_error);
  c.factors = 1;
  c.thin = 0;
  EXPECT_THROW(c.validate(5), input_error);
  c.thin = 1;
  c.prior = GdpParams{-1.0, 1.0};
  EXPECT_THROW(c.validate(5), input_error);
}

TEST(PxScales, PositiveRatiosPreserveRanks) {
  const auto sim = mixed_data(11);
  const auto ties = build_tie_groups(sim.data);
  auto cfg = short_config();
  RngStream rng(12);
  auto s = init_state(rng, sim.data, ties, cfg);
  for (int t = 0; t < 50; ++t) {
    const auto r = update_px_scales(s, rng, cfg);
    EXPECT_GT(r.minCoeff(), 0.0);
    EXPECT_TRUE(respects_ranks(s.latent, ties));
    update_loadings(s, rng, cfg);
    update_shrinkage(s, rng, cfg);
    update_scores(s, rng);
    update_latent_z(s, ties, rng);
  }
  EXPECT_EQ(s.counters.px_proposals, 50 * 6);
}
