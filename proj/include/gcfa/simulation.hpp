#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/baselines.hpp"
#include "gcfa/data.hpp"
#include "gcfa/draws.hpp"
#include "gcfa/error.hpp"
#include "gcfa/factor_algebra.hpp"
#include "gcfa/gibbs.hpp"
#include "gcfa/parallel.hpp"
#include "gcfa/stochastic.hpp"

namespace gcfa {

// ---------------------------------------------------------------------------
// Synthetic data

struct GaussianMargin {};

struct OrdinalDirichletMargin {
  int levels = 5;
  double concentration = 0.5;
};

struct EmpiricalMargin {
  EmpiricalCdf reference;
  MarginSpec spec;
};

// Ordinal margin with fixed level probabilities.
struct FixedOrdinalMargin {
  std::vector<double> probabilities;
};

using MarginGenerator = std::variant<GaussianMargin, OrdinalDirichletMargin, EmpiricalMargin, FixedOrdinalMargin>;

struct IidGdpLoadings {
  GdpParams params{};
};

// One factor with every scaled loading equal to `value`.
struct SharedScaledLoading {
  double value = 0.7;
};

// Given scaled loadings, rows of norm below one; the truth is then the same
// for every dataset drawn.
struct FixedScaledLoadings {
  Eigen::MatrixXd scaled;
};

using LoadingGenerator = std::variant<IidGdpLoadings, SharedScaledLoading, FixedScaledLoadings>;

struct SyntheticSpec {
  Index n = 200;
  Index p = 10;
  Index k = 2;
  LoadingGenerator loadings = IidGdpLoadings{};
  // One generator per column, or a single generator shared by all columns.
  std::vector<MarginGenerator> margins{GaussianMargin{}};

  const MarginGenerator& margin(Index j) const {
    return margins.size() == 1 ? margins.front() : margins[static_cast<std::size_t>(j)];
  }

  void validate() const {
    if (n < 2 || p < 2 || k < 1) throw input_error("synthetic design needs n >= 2, p >= 2, k >= 1");
    if (margins.size() != 1 && static_cast<Index>(margins.size()) != p)
      throw input_error("synthetic design needs one margin generator or one per column");
    if (const auto* s = std::get_if<SharedScaledLoading>(&loadings)) {
      if (k != 1) throw input_error("shared scaled loadings define a one-factor model");
      if (!(std::abs(s->value) < 1.0)) throw input_error("shared scaled loading must lie in (-1, 1)");
    }
    if (const auto* f = std::get_if<FixedScaledLoadings>(&loadings)) {
      if (f->scaled.rows() != p || f->scaled.cols() != k)
        throw input_error("fixed scaled loadings must be p x k");
      if (!((f->scaled.rowwise().squaredNorm().array() < 1.0).all()))
        throw input_error("fixed scaled loadings need row norms below one");
    }
    for (const auto& m : margins) {
      if (const auto* o = std::get_if<OrdinalDirichletMargin>(&m))
        if (o->levels < 2 || !(o->concentration > 0.0))
          throw input_error("ordinal generator needs >= 2 levels and positive concentration");
      if (const auto* o = std::get_if<FixedOrdinalMargin>(&m)) {
        double total = 0.0;
        for (double q : o->probabilities) {
          if (!(q > 0.0)) throw input_error("ordinal level probabilities must be positive");
          total += q;
        }
        if (o->probabilities.size() < 2 || std::abs(total - 1.0) > 1e-9)
          throw input_error("ordinal level probabilities need >= 2 levels summing to 1");
      }
    }
  }
};

struct SyntheticData {
  MixedDataMatrix data;
  Eigen::MatrixXd correlation;
  Eigen::MatrixXd scaled_loadings;
  Eigen::VectorXd uniqueness;
  Eigen::MatrixXd latent;
};

namespace detail {

inline double map_to_margin(const MarginGenerator& g, double z, const std::vector<double>& cuts) {
  if (std::holds_alternative<GaussianMargin>(g)) return z;
  if (std::holds_alternative<OrdinalDirichletMargin>(g) || std::holds_alternative<FixedOrdinalMargin>(g))
    return 1.0 + static_cast<double>(std::upper_bound(cuts.begin(), cuts.end(), z) - cuts.begin());
  const auto& e = std::get<EmpiricalMargin>(g);
  const double u = std::clamp(normal_cdf(z), std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  return e.reference.quantile(u);
}

inline MarginSpec margin_spec(const MarginGenerator& g) {
  if (std::holds_alternative<GaussianMargin>(g)) return MarginSpec::continuous();
  if (const auto* o = std::get_if<OrdinalDirichletMargin>(&g))
    return o->levels == 2 ? MarginSpec::binary() : MarginSpec::ordinal(o->levels);
  if (const auto* o = std::get_if<FixedOrdinalMargin>(&g)) {
    const int levels = static_cast<int>(o->probabilities.size());
    return levels == 2 ? MarginSpec::binary() : MarginSpec::ordinal(levels);
  }
  return std::get<EmpiricalMargin>(g).spec;
}

inline bool constant_column(const Eigen::MatrixXd& y, Index j) {
  return (y.col(j).array() == y(0, j)).all();
}

}  // namespace detail

/// Draws a dataset from a Gaussian copula factor model. Datasets with a
/// constant column are discarded and redrawn.
inline SyntheticData generate_synthetic(RngStream& rng, const SyntheticSpec& spec) {
  spec.validate();
  const Index n = spec.n, p = spec.p, k = spec.k;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    ScaledLoadings truth;
    if (const auto* g = std::get_if<IidGdpLoadings>(&spec.loadings)) {
      Eigen::MatrixXd l(p, k);
      for (Index j = 0; j < p; ++j)
        for (Index h = 0; h < k; ++h) l(j, h) = sample_gdp(rng, g->params);
      truth = scale_loadings(l);
    } else if (const auto* f = std::get_if<FixedScaledLoadings>(&spec.loadings)) {
      truth.scaled = f->scaled;
      truth.uniqueness = (1.0 - f->scaled.rowwise().squaredNorm().array()).matrix();
    } else {
      const double v = std::get<SharedScaledLoading>(spec.loadings).value;
      truth.scaled = Eigen::MatrixXd::Constant(p, 1, v);
      truth.uniqueness = Eigen::VectorXd::Constant(p, 1.0 - v * v);
    }

    std::vector<std::vector<double>> cuts(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
      Eigen::VectorXd probs;
      if (const auto* o = std::get_if<OrdinalDirichletMargin>(&spec.margin(j)))
        probs = rng.dirichlet(Eigen::VectorXd::Constant(o->levels, o->concentration));
      else if (const auto* f = std::get_if<FixedOrdinalMargin>(&spec.margin(j)))
        probs = Eigen::Map<const Eigen::VectorXd>(f->probabilities.data(), static_cast<Index>(f->probabilities.size()));
      else
        continue;
      double cum = 0.0;
      for (Index c = 0; c + 1 < probs.size(); ++c) {
        cum += probs(c);
        cuts[static_cast<std::size_t>(j)].push_back(normal_quantile(std::clamp(cum, 1e-300, 1.0 - 1e-16)));
      }
    }

    Eigen::MatrixXd z(n, p);
    const Eigen::VectorXd sd = truth.uniqueness.cwiseMax(0.0).cwiseSqrt();
    for (Index i = 0; i < n; ++i) {
      const Eigen::VectorXd eta = rng.normal_vector(k);
      for (Index j = 0; j < p; ++j) z(i, j) = truth.scaled.row(j).dot(eta) + sd(j) * rng.normal();
    }
    Eigen::MatrixXd y(n, p);
    std::vector<MarginSpec> margins;
    bool degenerate = false;
    for (Index j = 0; j < p; ++j) {
      const auto& g = spec.margin(j);
      for (Index i = 0; i < n; ++i) y(i, j) = detail::map_to_margin(g, z(i, j), cuts[static_cast<std::size_t>(j)]);
      margins.push_back(detail::margin_spec(g));
      degenerate = degenerate || detail::constant_column(y, j);
    }
    if (degenerate) continue;
    auto c = correlation_from_loadings(truth.scaled, truth.uniqueness);
    return {MixedDataMatrix(y, std::move(margins)), std::move(c.values), truth.scaled, truth.uniqueness, z};
  }
  throw numeric_error("synthetic generator kept producing constant columns");
}

// ---------------------------------------------------------------------------
// Losses

struct LossReport {
  double avg_abs_bias = 0.0;
  double max_abs_bias = 0.0;
  double root_squared_error = 0.0;
  double stein_loss = 0.0;
};

/// Losses of an estimated correlation matrix against the truth, over the
/// strict upper triangle. Stein's loss is tr(E T^-1) - log det(E T^-1) - p.
inline LossReport loss_suite(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  const Index p = truth.rows();
  if (truth.cols() != p || estimate.rows() != p || estimate.cols() != p || p < 2)
    throw input_error("loss suite needs two square matrices of equal size >= 2");
  const Eigen::LLT<Eigen::MatrixXd> t(truth);
  if (t.info() != Eigen::Success || t.matrixLLT().diagonal().minCoeff() < 1e-8)
    throw input_error("true correlation matrix is singular");
  LossReport r;
  double sq = 0.0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) {
      const double d = std::abs(estimate(i, j) - truth(i, j));
      r.avg_abs_bias += d;
      r.max_abs_bias = std::max(r.max_abs_bias, d);
      sq += d * d;
    }
  r.avg_abs_bias *= 2.0 / static_cast<double>(p * (p - 1));
  r.root_squared_error = std::sqrt(2.0 * sq);
  const Eigen::LLT<Eigen::MatrixXd> e(estimate);
  if (e.info() != Eigen::Success) {
    r.stein_loss = std::numeric_limits<double>::infinity();
    return r;
  }
  const double logdet_e = 2.0 * e.matrixLLT().diagonal().array().log().sum();
  const double logdet_t = 2.0 * t.matrixLLT().diagonal().array().log().sum();
  const double trace = t.solve(estimate).trace();
  r.stein_loss = std::max(0.0, trace - (logdet_e - logdet_t) - static_cast<double>(p));
  return r;
}

inline double loss_value(const LossReport& r, int which) {
  switch (which) {
    case 0: return r.avg_abs_bias;
    case 1: return r.max_abs_bias;
    case 2: return r.root_squared_error;
    default: return r.stein_loss;
  }
}

inline const char* loss_name(int which) {
  static constexpr const char* names[] = {"avg_abs_bias", "max_abs_bias", "root_squared_error", "stein_loss"};
  return names[std::clamp(which, 0, 3)];
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw input_error("median of an empty sample");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

// ---------------------------------------------------------------------------
// Efficiency relative to the correctly specified parametric model

enum class TruthFamily { Probit, Gaussian };

struct EfficiencyCell {
  Index p = 10;
  Index k = 2;
  Index n = 200;
};

struct EfficiencyConfig {
  std::vector<EfficiencyCell> cells{{10, 2, 200}, {20, 3, 500}};
  TruthFamily family = TruthFamily::Probit;
  int replicates = 20;
  int ordinal_levels = 5;
  McmcConfig mcmc{};
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct EfficiencyRecord {
  std::size_t cell = 0;
  int replicate = 0;
  LossReport copula;
  LossReport parametric;
  double copula_seconds = 0.0;
  double parametric_seconds = 0.0;

  double ratio(int which) const { return loss_value(copula, which) / loss_value(parametric, which); }
};

/// For every cell and replicate: simulate from the parametric truth, fit the
/// copula model and the matching parametric model at the true k, and record
/// both loss reports. Each replicate owns the stream (seed, index).
inline std::vector<EfficiencyRecord> efficiency_study(const EfficiencyConfig& cfg) {
  if (cfg.replicates < 1) throw input_error("need at least one replicate");
  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  std::vector<EfficiencyRecord> out(cfg.cells.size() * reps);
  parallel_for(out.size(), cfg.threads, [&](std::size_t idx) {
    const auto& cell = cfg.cells[idx / reps];
    RngStream rng(cfg.seed, idx);
    SyntheticSpec spec;
    spec.n = cell.n;
    spec.p = cell.p;
    spec.k = cell.k;
    if (cfg.family == TruthFamily::Probit)
      spec.margins = {OrdinalDirichletMargin{cfg.ordinal_levels, 0.5}};
    else
      spec.margins = {GaussianMargin{}};
    const auto sim = generate_synthetic(rng, spec);
    McmcConfig mc = cfg.mcmc;
    mc.factors = static_cast<int>(cell.k);
    mc.seed = rng();
    const auto copula = run_chain(sim.data, mc);
    mc.seed = rng();
    const auto parametric = cfg.family == TruthFamily::Probit ? probit_fm_sampler(sim.data, mc)
                                                              : gaussian_fm_sampler(sim.data, mc);
    auto& rec = out[idx];
    rec.cell = idx / reps;
    rec.replicate = static_cast<int>(idx % reps);
    rec.copula = loss_suite(copula.mean_correlation(), sim.correlation);
    rec.parametric = loss_suite(parametric.mean_correlation(), sim.correlation);
    rec.copula_seconds = copula.wall_seconds;
    rec.parametric_seconds = parametric.wall_seconds;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Misspecified margins

enum class TransformKind { None, Log, LogShift };

struct ColumnTransform {
  TransformKind kind = TransformKind::None;
  double shift = 0.0;

  double operator()(double x) const {
    switch (kind) {
      case TransformKind::Log: return std::log(x);
      case TransformKind::LogShift: return std::log(x + shift);
      default: return x;
    }
  }
};

/// Applies per-column transforms; the result must stay finite.
inline MixedDataMatrix apply_transforms(const MixedDataMatrix& data, const std::vector<ColumnTransform>& transforms) {
  if (static_cast<Index>(transforms.size()) != data.cols()) throw input_error("one transform per column required");
  Eigen::MatrixXd y = data.values();
  for (Index j = 0; j < data.cols(); ++j)
    for (Index i = 0; i < data.rows(); ++i) {
      if (data.is_missing(i, j)) continue;
      y(i, j) = transforms[static_cast<std::size_t>(j)](y(i, j));
      if (!std::isfinite(y(i, j)))
        throw input_error("transform of row " + std::to_string(i + 1) + ", column " + data.labels()[j] +
                          " is not finite");
    }
  return MixedDataMatrix(y, data.missing(), data.margins());
}

struct ReferenceMargin {
  EmpiricalCdf cdf;
  MarginSpec spec;
  ColumnTransform comparator_transform;  // applied before the Gaussian/probit fit
};

struct MisspecConfig {
  std::vector<ReferenceMargin> margins;
  double lambda = 0.7;
  Index n = 62;
  int replicates = 20;
  McmcConfig mcmc{};
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct MisspecRecord {
  int replicate = 0;
  Eigen::VectorXd copula_loadings;      // posterior mean scaled loadings
  Eigen::VectorXd comparator_loadings;  // same, mixed Gaussian/probit fit
};

/// One-factor copula data with the reference margins and every scaled loading
/// equal to `lambda`, fitted by the copula model and by the mixed
/// Gaussian/probit model on transformed data.
inline std::vector<MisspecRecord> misspecification_study(const MisspecConfig& cfg) {
  if (cfg.margins.size() < 2) throw input_error("misspecification study needs at least two reference margins");
  if (cfg.replicates < 1) throw input_error("need at least one replicate");
  SyntheticSpec spec;
  spec.n = cfg.n;
  spec.p = static_cast<Index>(cfg.margins.size());
  spec.k = 1;
  spec.loadings = SharedScaledLoading{cfg.lambda};
  spec.margins.clear();
  std::vector<ColumnTransform> transforms;
  for (const auto& m : cfg.margins) {
    spec.margins.emplace_back(EmpiricalMargin{m.cdf, m.spec});
    transforms.push_back(m.comparator_transform);
  }
  std::vector<MisspecRecord> out(static_cast<std::size_t>(cfg.replicates));
  parallel_for(out.size(), cfg.threads, [&](std::size_t r) {
    RngStream rng(cfg.seed, r);
    const auto sim = generate_synthetic(rng, spec);
    McmcConfig mc = cfg.mcmc;
    mc.factors = 1;
    mc.seed = rng();
    const auto copula = run_chain(sim.data, mc);
    mc.seed = rng();
    const auto comparator = mixed_fm_sampler(apply_transforms(sim.data, transforms), mc);
    out[r].replicate = static_cast<int>(r);
    out[r].copula_loadings = copula.mean_scaled_loadings().col(0);
    out[r].comparator_loadings = comparator.mean_scaled_loadings().col(0);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Conditional dependence through a discrete margin

struct DependenceDemoConfig {
  double c13 = 0.7;
  double c23 = 0.7;
  std::vector<double> y3_probabilities{0.5, 0.5};
  int level = 1;     // conditioning level of Y3, 1-based
  double t1 = 0.0;   // Y1 = 1{z1 <= t1}
  double t2 = 0.0;
  long draws = 1'000'000;
};

struct DependenceGap {
  double c12 = 0.0;
  double gap = 0.0;  // E[g1 g2] - E[g1] E[g2] over z3 | Y3 = level
  double standard_error = 0.0;
  double mean_g1 = 0.0;
  double mean_g2 = 0.0;
};

/// With c12 = c13 c23 the latent z1, z2 are independent given z3, yet the
/// indicators 1{z1 <= t1}, 1{z2 <= t2} stay dependent given the coarsened Y3.
/// g_j(z3) = P(z_j <= t_j | z3). The standard error uses the influence
/// function of the covariance estimator.
inline DependenceGap conditional_dependence_demo(RngStream& rng, const DependenceDemoConfig& cfg) {
  if (!(std::abs(cfg.c13) < 1.0) || !(std::abs(cfg.c23) < 1.0))
    throw input_error("c13 and c23 must lie in (-1, 1) for a positive definite correlation matrix");
  if (cfg.draws < 2) throw input_error("need at least two draws");
  const auto& probs = cfg.y3_probabilities;
  if (probs.size() < 2) throw input_error("Y3 needs at least two levels");
  double total = 0.0;
  for (double q : probs) {
    if (!(q > 0.0)) throw input_error("Y3 level probabilities must be positive");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) throw input_error("Y3 level probabilities must sum to 1");
  if (cfg.level < 1 || cfg.level > static_cast<int>(probs.size())) throw input_error("Y3 level out of range");

  double below = 0.0;
  for (int c = 0; c + 1 < cfg.level; ++c) below += probs[static_cast<std::size_t>(c)];
  const double above = below + probs[static_cast<std::size_t>(cfg.level - 1)];
  const double lo = cfg.level == 1 ? -std::numeric_limits<double>::infinity() : normal_quantile(below);
  const double hi = cfg.level == static_cast<int>(probs.size()) ? std::numeric_limits<double>::infinity()
                                                                 : normal_quantile(std::min(above, 1.0 - 1e-16));
  const double s1 = std::sqrt(1.0 - cfg.c13 * cfg.c13);
  const double s2 = std::sqrt(1.0 - cfg.c23 * cfg.c23);

  const auto m = static_cast<std::size_t>(cfg.draws);
  std::vector<double> g1(m), g2(m);
  double a = 0.0, b = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double z3 = sample_truncated_normal(rng, 0.0, 1.0, lo, hi);
    g1[i] = normal_cdf((cfg.t1 - cfg.c13 * z3) / s1);
    g2[i] = normal_cdf((cfg.t2 - cfg.c23 * z3) / s2);
    a += g1[i];
    b += g2[i];
    ab += g1[i] * g2[i];
  }
  const double dm = static_cast<double>(m);
  a /= dm;
  b /= dm;
  ab /= dm;
  DependenceGap out;
  out.c12 = cfg.c13 * cfg.c23;
  out.gap = ab - a * b;
  out.mean_g1 = a;
  out.mean_g2 = b;
  double var = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double psi = (g1[i] - a) * (g2[i] - b) - out.gap;
    var += psi * psi;
  }
  out.standard_error = std::sqrt(var / (dm - 1.0) / dm);
  return out;
}

}  // namespace gcfa
