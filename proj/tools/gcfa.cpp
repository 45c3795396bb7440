#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcfa/gcfa.hpp"

#ifndef GCFA_DEFAULT_DATA
#define GCFA_DEFAULT_DATA "data/perisk.csv"
#endif

namespace {

using namespace gcfa;
namespace fs = std::filesystem;

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

std::string fmt(double v) { return format_double(v); }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write " + path.string());
  return out;
}

IngestedData load_data(const std::string& path, const std::string& margins) {
  return margins.empty() ? ingest_csv(path) : ingest_csv(path, read_margin_spec(margins));
}

struct FitArgs {
  std::string data = GCFA_DEFAULT_DATA;
  std::string margins;
  std::string model = "copula";
  int factors = 1;
  std::string prior = "gdp:3,1";
  int iterations = 20000;
  int burnin = 2000;
  int thin = 10;
  std::uint64_t seed = 1;
  bool no_px = false;
  std::string identification = "lower-triangular";
  bool store_scores = false;
  bool check_ranks = false;
  std::string out = "gcfa-out";
};

McmcConfig mcmc_from(const FitArgs& a) {
  McmcConfig c;
  c.iterations = a.iterations;
  c.burnin = a.burnin;
  c.thin = a.thin;
  c.factors = a.factors;
  c.seed = a.seed;
  c.prior = parse_prior(a.prior);
  c.identification = parse_identification(a.identification);
  c.px_enabled = !a.no_px;
  c.store_scores = a.store_scores;
  c.check_ranks = a.check_ranks;
  return c;
}

double min_loading_ess(const PosteriorDraws& d) {
  if (d.size() < 100) return std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  for (Index e = 0; e < d.loadings.cols(); ++e) {
    const Eigen::VectorXd t = d.loadings.col(e);
    if ((t.array() == 0.0).all()) continue;  // structural zero
    best = std::min(best, effective_sample_size(std::span<const double>(t.data(), static_cast<std::size_t>(t.size()))));
  }
  return best;
}

int run_fit(const FitArgs& a) {
  const auto input = load_data(a.data, a.margins);
  const McmcConfig config = mcmc_from(a);
  std::signal(SIGINT, on_sigint);
  const RunControl control{&g_stop};
  PosteriorDraws draws;
  if (a.model == "copula") draws = run_chain(input.data, config, control);
  else if (a.model == "gaussian") draws = gaussian_fm_sampler(input.data, config, control);
  else if (a.model == "probit") draws = probit_fm_sampler(input.data, config, control);
  else if (a.model == "mixed") draws = mixed_fm_sampler(input.data, config, control);
  else throw input_error("unknown model '" + a.model + "' (expected copula, gaussian, probit or mixed)");

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_archive((dir / "draws.gcfa").string(), draws);
  std::cout << "draws\t" << draws.size() << "\nseconds\t" << fmt(draws.wall_seconds) << '\n';
  if (draws.interrupted) std::cout << "interrupted\t1 (partial draws saved)\n";
  if (!std::isnan(draws.cutpoint_acceptance)) std::cout << "cutpoint_acceptance\t" << fmt(draws.cutpoint_acceptance) << '\n';
  if (draws.size() >= 100) {
    auto out = open_out(dir / "summary.tsv");
    write_summary(out, summarize(draws));
    std::cout << "min_loading_ess\t" << fmt(min_loading_ess(draws)) << '\n';
  } else {
    std::cout << "summary skipped: fewer than 100 retained draws\n";
  }
  std::cout << "archive\t" << (dir / "draws.gcfa").string() << '\n';
  return draws.interrupted ? 130 : 0;
}

struct PredictArgs {
  std::string archive;
  std::string data = GCFA_DEFAULT_DATA;
  std::string margins;
  std::string target;
  std::vector<std::string> given;
  Index draws = 10000;
  int inner = 32;
  std::uint64_t seed = 1;
  std::string out;
};

int run_predict(const PredictArgs& a) {
  const auto draws = read_archive(a.archive);
  const auto input = load_data(a.data, a.margins);
  if (draws.labels != input.data.labels()) throw input_error("archive variables do not match the data columns");
  const auto cdfs = empirical_cdfs(input.data);
  RngStream rng(a.seed);
  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& out = a.out.empty() ? std::cout : file;
  const auto labels = input.data.labels();

  if (a.target.empty()) {
    if (!a.given.empty()) throw input_error("--given needs --target");
    const Index per = std::max<Index>(1, (a.draws + draws.size() - 1) / std::max<Index>(draws.size(), 1));
    const auto pred = sample_predictive(rng, draws, cdfs, per);
    TableWriter table(out, labels);
    for (Index r = 0; r < std::min(a.draws, pred.observed.rows()); ++r) {
      std::vector<std::string> row;
      for (Index j = 0; j < pred.observed.cols(); ++j) row.push_back(fmt(input.original_value(j, pred.observed(r, j))));
      table.row(row);
    }
    return 0;
  }
  const Index target = input.column_index(a.target);
  std::vector<Condition> conditions;
  for (const auto& g : a.given) {
    const auto eq = g.find('=');
    if (eq == std::string::npos) throw input_error("--given expects var=value, got '" + g + "'");
    const std::string name = trim(g.substr(0, eq));
    const Index j = input.column_index(name);
    const auto v = parse_number(trim(g.substr(eq + 1)));
    if (!v) throw input_error("--given value for " + name + " is not a number");
    const double model = input.model_value(j, *v);
    if (std::isnan(model)) throw input_error("--given value " + trim(g.substr(eq + 1)) + " is not an observed level of " + name);
    conditions.push_back({j, model});
  }
  const auto cdf = conditional_predictive(rng, draws, cdfs, target, conditions, a.inner);
  TableWriter table(out, {labels[target], "cdf"});
  for (std::size_t s = 0; s < cdf.support.size(); ++s)
    table.row({fmt(input.original_value(target, cdf.support[s])), fmt(cdf.cdf[s])});
  if (cdf.skipped_draws > 0) std::cerr << "note: " << cdf.skipped_draws << " draws had zero conditioning mass\n";
  return 0;
}

struct StudyArgs {
  std::string which;
  std::string scale = "desk";
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int replicates = 0;
  int iterations = 0;
  std::string out;
  std::string family = "probit";
  std::string data = GCFA_DEFAULT_DATA;
  std::vector<double> lambdas{0.7, 0.8};
  Index n = 62;
  std::vector<int> ks{1, 5, 10};
  std::vector<std::string> priors{"gdp:3,1", "normal:1", "normal:4"};
  Index prior_draws = 100000;
};

McmcConfig study_mcmc(const StudyArgs& a) {
  McmcConfig c;
  if (a.scale == "paper") {
    c.iterations = 100000;
    c.burnin = 10000;
    c.thin = 20;
  } else if (a.scale == "desk") {
    c.iterations = 20000;
    c.burnin = 2000;
    c.thin = 10;
  } else {
    throw input_error("--scale must be desk or paper");
  }
  if (a.iterations > 0) {
    c.iterations = a.iterations;
    c.burnin = std::min(c.burnin, a.iterations / 10);
  }
  return c;
}

int replicates_for(const StudyArgs& a) { return a.replicates > 0 ? a.replicates : a.scale == "paper" ? 100 : 20; }

std::vector<ReferenceMargin> reference_margins(const IngestedData& input) {
  const auto transforms = quinn_transforms(input.data.labels());
  std::vector<ReferenceMargin> out;
  for (Index j = 0; j < input.data.cols(); ++j)
    out.push_back({empirical_cdf(input.data, j), input.data.margin(j), transforms[static_cast<std::size_t>(j)]});
  return out;
}

int run_study(const StudyArgs& a) {
  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& out = a.out.empty() ? std::cout : file;

  if (a.which == "efficiency") {
    EfficiencyConfig cfg;
    cfg.family = a.family == "gaussian" ? TruthFamily::Gaussian
                 : a.family == "probit" ? TruthFamily::Probit
                                        : throw input_error("--family must be probit or gaussian");
    cfg.replicates = replicates_for(a);
    cfg.mcmc = study_mcmc(a);
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    const auto recs = efficiency_study(cfg);
    TableWriter t(out, {"p", "k", "n", "replicate", "loss", "copula", "parametric", "ratio"});
    for (const auto& r : recs) {
      const auto& cell = cfg.cells[r.cell];
      for (int l = 0; l < 4; ++l)
        t.row({std::to_string(cell.p), std::to_string(cell.k), std::to_string(cell.n), std::to_string(r.replicate),
               loss_name(l), fmt(loss_value(r.copula, l)), fmt(loss_value(r.parametric, l)), fmt(r.ratio(l))});
    }
    return 0;
  }
  if (a.which == "misspec") {
    const auto input = ingest_csv(a.data);
    TableWriter t(out, {"lambda", "replicate", "variable", "copula", "gaussian_probit"});
    for (double lambda : a.lambdas) {
      MisspecConfig cfg;
      cfg.margins = reference_margins(input);
      cfg.lambda = lambda;
      cfg.n = a.n;
      cfg.replicates = replicates_for(a);
      cfg.mcmc = study_mcmc(a);
      cfg.seed = a.seed;
      cfg.threads = a.threads;
      const auto labels = input.data.labels();
      for (const auto& r : misspecification_study(cfg))
        for (Index j = 0; j < input.data.cols(); ++j)
          t.row({fmt(lambda), std::to_string(r.replicate), labels[j], fmt(r.copula_loadings(j)),
                 fmt(r.comparator_loadings(j))});
    }
    return 0;
  }
  if (a.which == "priors") {
    TableWriter t(out, {"prior", "k", "draw", "scaled_loading", "uniqueness"});
    std::uint64_t stream = 0;
    for (const auto& text : a.priors) {
      const auto prior = parse_prior(text);
      for (int k : a.ks) {
        RngStream rng(a.seed, stream++);
        const auto s = simulate_induced_prior(rng, prior, k, a.prior_draws);
        for (Index d = 0; d < a.prior_draws; ++d)
          t.row({text, std::to_string(k), std::to_string(d), fmt(s.scaled_loadings(d, 0)), fmt(s.uniqueness(d))});
      }
    }
    return 0;
  }
  throw input_error("unknown study '" + a.which + "' (expected efficiency, misspec or priors)");
}

struct DemoArgs {
  DependenceDemoConfig cfg;
  std::uint64_t seed = 1;
};

int run_demo(const DemoArgs& a) {
  RngStream rng(a.seed);
  const auto g = conditional_dependence_demo(rng, a.cfg);
  std::cout << "c12\t" << fmt(g.c12) << "\ngap\t" << fmt(g.gap) << "\nstandard_error\t" << fmt(g.standard_error)
            << "\nz_score\t" << fmt(g.standard_error > 0.0 ? g.gap / g.standard_error : 0.0) << '\n';
  return 0;
}

struct QuinnArgs {
  std::string data = GCFA_DEFAULT_DATA;
  QuinnConfig cfg;
  std::string out = "quinn-out";
};

int run_quinn(QuinnArgs a) {
  const auto input = ingest_csv(a.data);
  a.cfg.seed = a.cfg.mcmc.seed;
  std::signal(SIGINT, on_sigint);
  const auto r = quinn_replication(input, a.cfg, RunControl{&g_stop});
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_archive((dir / "copula.gcfa").string(), r.copula);
  write_archive((dir / "comparator.gcfa").string(), r.comparator);
  const auto labels = input.data.labels();
  {
    auto f = open_out(dir / "correlation.tsv");
    TableWriter t(f, {"model", "pair", "mean", "sd", "hpd95_lo", "hpd95_hi"});
    for (const auto& [name, s] : {std::pair{"copula", r.copula_correlation}, {"gaussian_probit", r.comparator_correlation}})
      t.row({name, s.name, fmt(s.mean), fmt(s.sd), fmt(s.hpd95.lower), fmt(s.hpd95.upper)});
  }
  {
    auto f = open_out(dir / "kendall_tau.tsv");
    TableWriter t(f, {"first", "second", "observed", "boot_lo", "boot_hi", "copula_mean", "copula_lo", "copula_hi",
                      "comparator_mean", "comparator_lo", "comparator_hi"});
    for (const auto& c : r.taus)
      t.row({labels[c.first], labels[c.second], fmt(c.observed), fmt(c.bootstrap.lower), fmt(c.bootstrap.upper),
             fmt(c.copula_mean), fmt(c.copula.lower), fmt(c.copula.upper), fmt(c.comparator_mean),
             fmt(c.comparator.lower), fmt(c.comparator.upper)});
  }
  {
    auto f = open_out(dir / "factor_scores.tsv");
    TableWriter t(f, {"id", "mean", "hpd90_lo", "hpd90_hi", "rescaled_mean", "rescaled_lo", "rescaled_hi"});
    for (const auto& s : r.scores)
      t.row({s.id, fmt(s.mean), fmt(s.hpd.lower), fmt(s.hpd.upper), fmt(s.rescaled_mean), fmt(s.rescaled_hpd.lower),
             fmt(s.rescaled_hpd.upper)});
  }
  std::cout << "copula " << r.copula_correlation.name << "\tmean " << fmt(r.copula_correlation.mean) << "\thpd95 ("
            << fmt(r.copula_correlation.hpd95.lower) << ", " << fmt(r.copula_correlation.hpd95.upper) << ")\n";
  std::cout << "gaussian/probit " << r.comparator_correlation.name << "\tmean " << fmt(r.comparator_correlation.mean)
            << "\thpd95 (" << fmt(r.comparator_correlation.hpd95.lower) << ", "
            << fmt(r.comparator_correlation.hpd95.upper) << ")\n";
  std::cout << "tables written to " << dir.string() << '\n';
  return r.copula.interrupted || r.comparator.interrupted ? 130 : 0;
}

struct SimulateArgs {
  Index n = 200, p = 8, k = 2;
  std::string margins = "mixed";
  int levels = 5;
  std::uint64_t seed = 1;
  std::string out = "synthetic.csv";
};

int run_simulate(const SimulateArgs& a) {
  SyntheticSpec spec;
  spec.n = a.n;
  spec.p = a.p;
  spec.k = a.k;
  if (a.margins == "gaussian") spec.margins = {GaussianMargin{}};
  else if (a.margins == "ordinal") spec.margins = {OrdinalDirichletMargin{a.levels, 0.5}};
  else if (a.margins == "mixed") {
    spec.margins.clear();
    for (Index j = 0; j < a.p; ++j)
      spec.margins.push_back(j < a.p / 2 ? MarginGenerator{GaussianMargin{}} : MarginGenerator{OrdinalDirichletMargin{a.levels, 0.5}});
  } else {
    throw input_error("--margins must be gaussian, ordinal or mixed");
  }
  RngStream rng(a.seed);
  const auto sim = generate_synthetic(rng, spec);
  auto f = open_out(a.out);
  for (Index j = 0; j < a.p; ++j) f << (j ? "," : "") << "V" << j + 1;
  f << '\n';
  for (Index i = 0; i < a.n; ++i) {
    for (Index j = 0; j < a.p; ++j) f << (j ? "," : "") << fmt(sim.data(i, j));
    f << '\n';
  }
  auto truth = open_out(a.out + ".truth.tsv");
  for (Index i = 0; i < a.p; ++i) {
    for (Index j = 0; j < a.p; ++j) truth << (j ? "\t" : "") << fmt(sim.correlation(i, j));
    truth << '\n';
  }
  std::cout << "data\t" << a.out << "\ntruth\t" << a.out << ".truth.tsv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Gaussian copula factor analysis for mixed data"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "run the sampler and write draws and a summary");
  fit_cmd->add_option("--data", fit.data, "CSV file with a header row")->check(CLI::ExistingFile);
  fit_cmd->add_option("--margins", fit.margins, "margin spec file (name: kind per line)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--model", fit.model, "copula, gaussian, probit or mixed");
  fit_cmd->add_option("--factors,-k", fit.factors);
  fit_cmd->add_option("--prior", fit.prior, "gdp:ALPHA,BETA or normal:VARIANCE");
  fit_cmd->add_option("--iters", fit.iterations, "sweeps after burn-in");
  fit_cmd->add_option("--burnin", fit.burnin);
  fit_cmd->add_option("--thin", fit.thin);
  fit_cmd->add_option("--seed", fit.seed);
  fit_cmd->add_flag("--no-px", fit.no_px, "disable the parameter-expansion move");
  fit_cmd->add_option("--identification", fit.identification, "lower-triangular or unconstrained");
  fit_cmd->add_flag("--store-scores", fit.store_scores);
  fit_cmd->add_flag("--check-ranks", fit.check_ranks, "verify the rank constraints after every update");
  fit_cmd->add_option("--out", fit.out, "output directory");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "joint or conditional posterior predictive");
  pred_cmd->add_option("--archive", pred.archive)->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--data", pred.data)->check(CLI::ExistingFile);
  pred_cmd->add_option("--margins", pred.margins)->check(CLI::ExistingFile);
  pred_cmd->add_option("--target", pred.target, "variable whose conditional cdf is wanted");
  pred_cmd->add_option("--given", pred.given, "conditioning value, var=value (repeatable)");
  pred_cmd->add_option("--draws", pred.draws, "joint predictive draws");
  pred_cmd->add_option("--inner", pred.inner, "latent draws per retained draw for conditional cdfs");
  pred_cmd->add_option("--seed", pred.seed);
  pred_cmd->add_option("--out", pred.out, "output file (default stdout)");

  StudyArgs study;
  auto* study_cmd = app.add_subcommand("study", "simulation studies");
  study_cmd->add_option("which", study.which, "efficiency, misspec or priors")->required();
  study_cmd->add_option("--scale", study.scale, "desk or paper");
  study_cmd->add_option("--seed", study.seed);
  study_cmd->add_option("--threads", study.threads);
  study_cmd->add_option("--replicates", study.replicates);
  study_cmd->add_option("--iters", study.iterations);
  study_cmd->add_option("--family", study.family, "efficiency truth: probit or gaussian");
  study_cmd->add_option("--data", study.data, "reference margins for misspec")->check(CLI::ExistingFile);
  study_cmd->add_option("--lambda", study.lambdas)->delimiter(',');
  study_cmd->add_option("--n", study.n, "misspec sample size");
  study_cmd->add_option("--k", study.ks)->delimiter(',');
  study_cmd->add_option("--prior", study.priors)->delimiter(';');
  study_cmd->add_option("--draws", study.prior_draws);
  study_cmd->add_option("--out", study.out);

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("demo", "conditional dependence through a discrete margin");
  std::string demo_name;
  demo_cmd->add_option("name", demo_name, "cond-dep")->required()->check(CLI::IsMember({"cond-dep"}));
  demo_cmd->add_option("--c13", demo.cfg.c13);
  demo_cmd->add_option("--c23", demo.cfg.c23);
  demo_cmd->add_option("--probs", demo.cfg.y3_probabilities, "Y3 level probabilities")->delimiter(',');
  demo_cmd->add_option("--level", demo.cfg.level);
  demo_cmd->add_option("--draws", demo.cfg.draws);
  demo_cmd->add_option("--seed", demo.seed);

  QuinnArgs quinn;
  auto* quinn_cmd = app.add_subcommand("replicate-quinn", "political-economic risk comparison");
  quinn_cmd->add_option("--data", quinn.data)->check(CLI::ExistingFile);
  quinn_cmd->add_option("--iters", quinn.cfg.mcmc.iterations);
  quinn_cmd->add_option("--burnin", quinn.cfg.mcmc.burnin);
  quinn_cmd->add_option("--thin", quinn.cfg.mcmc.thin);
  quinn_cmd->add_option("--seed", quinn.cfg.mcmc.seed);
  quinn_cmd->add_option("--predictive", quinn.cfg.predictive_datasets, "replicated datasets for tau checks");
  quinn_cmd->add_option("--bootstrap", quinn.cfg.bootstrap);
  quinn_cmd->add_option("--out", quinn.out);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "write a synthetic dataset and its true correlation");
  sim_cmd->add_option("--n", sim.n);
  sim_cmd->add_option("--p", sim.p);
  sim_cmd->add_option("--k", sim.k);
  sim_cmd->add_option("--margins", sim.margins, "gaussian, ordinal or mixed");
  sim_cmd->add_option("--levels", sim.levels);
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--out", sim.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*pred_cmd) return run_predict(pred);
    if (*study_cmd) return run_study(study);
    if (*demo_cmd) return run_demo(demo);
    if (*quinn_cmd) return run_quinn(quinn);
    if (*sim_cmd) return run_simulate(sim);
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
