// Command-line front end: simulate, curves, stop, estimate, complexity, eig.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "earlystop/earlystop.hpp"

using namespace earlystop;

namespace {

struct KernelOpts {
  std::string kind = "sobolev_min";
  int degree = 3;
  double bandwidth = 0.1;

  void add(CLI::App* app) {
    app->add_option("--kernel", kind, "sobolev_min | polynomial | gaussian | laplace")->capture_default_str();
    app->add_option("--degree", degree, "polynomial degree")->capture_default_str();
    app->add_option("--bandwidth", bandwidth, "gaussian / laplace bandwidth")->capture_default_str();
  }

  KernelKind build() const {
    json j{{"kind", kind}, {"degree", degree}, {"bandwidth", bandwidth}};
    return kernel_from_json(j);
  }
};

struct FilterOpts {
  std::string family = "gd";
  std::optional<double> eta;
  std::optional<double> t_max;

  void add(CLI::App* app) {
    app->add_option("--family", family, "gd | krr")->capture_default_str();
    app->add_option("--eta", eta, "step size (default 1/(1.2 mu_1) for gd, 1 for krr)");
    app->add_option("--t-max", t_max, "search horizon (default 1e6/eta)");
  }

  FilterPolicy build() const { return FilterPolicy{family_from_string(family), eta, t_max}; }
};

struct DataContext {
  LoadedDataset data;
  EigenSystem eig;
  FilterSpec spec;
};

DataContext load(const std::string& path, const KernelOpts& k, const FilterOpts& f, double rank_tol) {
  DataContext c;
  c.data = load_dataset_csv(path);
  c.eig = eigensystem(build_gram(k.build(), c.data.sample.xs), rank_tol);
  c.spec = f.build().resolve(c.eig);
  for (const auto& w : c.eig.warnings) std::cerr << "warning: " << w << '\n';
  return c;
}

std::optional<double> parse_alpha(const std::string& s) {
  if (s == "auto") return std::nullopt;
  return std::stod(s);
}

double resolve_alpha(const std::optional<double>& a, const EigenSystem& eig) {
  if (a) return *a;
  const auto choice = default_alpha(estimate_beta(eig));
  if (choice.outside_regime) std::cerr << "warning: beta_hat <= 1, alpha set to 0.5\n";
  return choice.alpha;
}

/// "finite_rank", "smoothed" or a number.
double resolve_sigma2(const std::string& s, const DataContext& c, const RotatedSample& rot) {
  if (s == "finite_rank") return estimate_sigma_finite_rank(rot, c.eig).sigma2_hat;
  if (s == "smoothed") return estimate_sigma_smoothed(rot, c.eig, c.spec).sigma2_hat;
  return std::stod(s);
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-filter kernel regression with data-driven early stopping"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a seeded multi-trial experiment");
  std::string sim_config, sim_out;
  std::optional<unsigned> sim_threads;
  sim->add_option("--config", sim_config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--threads", sim_threads, "worker threads (results do not depend on it)");

  // curves
  auto* cur = app.add_subcommand("curves", "bias, variance, risk and empirical risk over time");
  std::string cur_config, cur_out;
  std::optional<int> cur_n;
  std::size_t cur_trial = 0;
  int cur_points = 200;
  std::optional<double> cur_t_min, cur_t_max;
  cur->add_option("--config", cur_config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  cur->add_option("--n", cur_n, "sample size (default: first of n_grid)");
  cur->add_option("--trial", cur_trial, "trial index used for the seed")->capture_default_str();
  cur->add_option("--points", cur_points, "log-spaced grid points")->capture_default_str();
  cur->add_option("--t-min", cur_t_min, "first time (default 1e-2/eta)");
  cur->add_option("--t-max", cur_t_max, "last time (default 1e6/eta)");
  cur->add_option("--out", cur_out, "CSV file (default stdout)");

  // stop
  auto* stp = app.add_subcommand("stop", "apply one stopping rule to a dataset");
  std::string stp_data, stp_rule, stp_alpha = "0", stp_sigma2;
  std::uint64_t stp_seed = 0;
  double stp_radius = 1.0, stp_rank_tol = kDefaultRankTol;
  int stp_folds = 4;
  std::string stp_oracle = "expected";
  KernelOpts stp_k;
  FilterOpts stp_f;
  stp->add_option("--data", stp_data, "CSV with x,y or x,y,f_star")->required()->check(CLI::ExistingFile);
  stp->add_option("--rule", stp_rule, "mdp | smoothed_mdp | theoretical_mdp | balancing | oracle | rwy | holdout | vfold")
      ->required();
  stp->add_option("--alpha", stp_alpha, "smoothing level or 'auto'")->capture_default_str();
  stp->add_option("--sigma2", stp_sigma2, "noise variance: number, 'finite_rank' or 'smoothed'");
  stp->add_option("--seed", stp_seed, "split seed for holdout / vfold")->capture_default_str();
  stp->add_option("--radius", stp_radius, "RKHS radius R")->capture_default_str();
  stp->add_option("--folds", stp_folds, "V for vfold")->capture_default_str();
  stp->add_option("--oracle-risk", stp_oracle, "expected | realized")->capture_default_str();
  stp->add_option("--rank-tol", stp_rank_tol, "relative rank threshold")->capture_default_str();
  stp_k.add(stp);
  stp_f.add(stp);

  // estimate
  auto* est = app.add_subcommand("estimate", "noise variance, decay exponent or smoothing level");
  std::string est_data, est_what, est_method = "finite_rank";
  std::optional<double> est_horizon;
  double est_rank_tol = kDefaultRankTol;
  KernelOpts est_k;
  FilterOpts est_f;
  est->add_option("--data", est_data, "CSV with x,y")->required()->check(CLI::ExistingFile);
  est->add_option("--what", est_what, "sigma2 | beta | alpha")->required()->check(CLI::IsMember({"sigma2", "beta", "alpha"}));
  est->add_option("--method", est_method, "finite_rank | smoothed | loglog")->capture_default_str();
  est->add_option("--horizon", est_horizon, "T for the smoothed estimator (default 1e4/eta)");
  est->add_option("--rank-tol", est_rank_tol, "relative rank threshold")->capture_default_str();
  est_k.add(est);
  est_f.add(est);

  // complexity
  auto* cpx = app.add_subcommand("complexity", "critical radius, statistical dimension and tail audit");
  std::string cpx_data;
  std::optional<int> cpx_n;
  std::string cpx_alpha = "0";
  double cpx_sigma = 0.15, cpx_radius = 1.0, cpx_rank_tol = kDefaultRankTol;
  KernelOpts cpx_k;
  cpx->add_option("--data", cpx_data, "CSV whose x column defines the design")->check(CLI::ExistingFile);
  cpx->add_option("--n", cpx_n, "equidistant design x_j = j/n instead of a dataset");
  cpx->add_option("--alpha", cpx_alpha, "smoothing level or 'auto'")->capture_default_str();
  cpx->add_option("--sigma", cpx_sigma, "noise level")->capture_default_str();
  cpx->add_option("--radius", cpx_radius, "RKHS radius R")->capture_default_str();
  cpx->add_option("--rank-tol", cpx_rank_tol, "relative rank threshold")->capture_default_str();
  cpx_k.add(cpx);

  // eig
  auto* eg = app.add_subcommand("eig", "dump the spectrum of the normalized Gram matrix");
  std::string eg_data;
  double eg_rank_tol = kDefaultRankTol;
  KernelOpts eg_k;
  eg->add_option("--data", eg_data, "CSV whose x column defines the design")->required()->check(CLI::ExistingFile);
  eg->add_option("--rank-tol", eg_rank_tol, "relative rank threshold")->capture_default_str();
  eg_k.add(eg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      auto config = load_config(sim_config);
      if (sim_threads) config.threads = *sim_threads;
      const auto report = run_experiment(config);
      write_report(sim_out, report);
      int failures = 0;
      for (const auto& row : report.summary) failures += row.failures;
      std::cerr << "wrote " << sim_out << " (" << report.trials.size() << " trials, " << failures
                << " failed rule evaluations)\n";
    } else if (*cur) {
      const auto config = load_config(cur_config);
      const int n = cur_n ? *cur_n : config.n_grid.front();
      std::size_t n_index = 0;
      for (std::size_t i = 0; i < config.n_grid.size(); ++i)
        if (config.n_grid[i] == n) n_index = i;
      const auto data = generate_dataset(config, n, trial_seed(config.master_seed, n_index, cur_trial));
      const auto eig = eigensystem(build_gram(config.kernel, data.sample.xs), config.rank_tol);
      const auto spec = config.filter.resolve(eig);
      const auto rot = rotate(eig, data.sample.responses(), data.f_star, config.sigma * config.sigma);
      const auto grid = log_time_grid(cur_t_min ? *cur_t_min : 1e-2 / spec.eta, cur_t_max ? *cur_t_max : spec.t_max,
                                      cur_points);
      const auto rows = emit_curves(rot, eig, spec, grid);
      if (cur_out.empty()) {
        write_curves_csv(std::cout, rows);
      } else {
        std::ofstream f(cur_out, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + cur_out);
        write_curves_csv(f, rows);
      }
    } else if (*stp) {
      const auto ctx = load(stp_data, stp_k, stp_f, stp_rank_tol);
      const StopRule rule = stop_rule_from_string(stp_rule);
      const auto alpha_opt = parse_alpha(stp_alpha);
      RotatedSample rot = rotate(ctx.eig, ctx.data.sample.responses(), ctx.data.f_star);
      std::optional<double> sigma2;
      if (!stp_sigma2.empty()) sigma2 = resolve_sigma2(stp_sigma2, ctx, rot);
      rot.sigma2 = sigma2;
      auto need_sigma2 = [&]() {
        if (!sigma2) throw ConfigError("rule '" + stp_rule + "' needs --sigma2");
        return *sigma2;
      };
      StoppingOutcome out;
      switch (rule) {
        case StopRule::MDP:
        case StopRule::SmoothedMDP:
          out = mdp_stop(rot, ctx.eig, ctx.spec, resolve_alpha(alpha_opt, ctx.eig), need_sigma2());
          break;
        case StopRule::TheoreticalMDP:
          need_sigma2();
          out = theoretical_mdp_stop(rot, ctx.eig, ctx.spec, resolve_alpha(alpha_opt, ctx.eig));
          break;
        case StopRule::Balancing:
          need_sigma2();
          out = balancing_stop(rot, ctx.eig, ctx.spec, resolve_alpha(alpha_opt, ctx.eig));
          break;
        case StopRule::Oracle:
          need_sigma2();
          out = oracle_stop(rot, ctx.eig, ctx.spec, stp_oracle == "realized" ? OracleRisk::Realized : OracleRisk::Expected);
          break;
        case StopRule::RWY: out = rwy_stop(ctx.eig, ctx.spec, std::sqrt(need_sigma2()), stp_radius); break;
        case StopRule::HoldOut:
          out = holdout_stop(ctx.data.sample, stp_k.build(), stp_f.build(), stp_seed, stp_rank_tol);
          break;
        case StopRule::VFold:
          out = vfold_stop(ctx.data.sample, stp_k.build(), stp_f.build(), stp_folds, stp_seed, stp_rank_tol);
          break;
      }
      json j = to_json(out);
      j["eta"] = ctx.spec.eta;
      j["t_max"] = ctx.spec.t_max;
      j["sigma2"] = optional_json(sigma2);
      if (rot.g_star) j["error"] = estimation_error(ctx.spec, ctx.eig, rot, out.t_stop);
      emit(j);
    } else if (*est) {
      const auto ctx = load(est_data, est_k, est_f, est_rank_tol);
      const auto rot = rotate(ctx.eig, ctx.data.sample.responses());
      if (est_what == "sigma2") {
        if (est_method == "finite_rank") emit(to_json(estimate_sigma_finite_rank(rot, ctx.eig)));
        else if (est_method == "smoothed") emit(to_json(estimate_sigma_smoothed(rot, ctx.eig, ctx.spec, est_horizon)));
        else throw ConfigError("sigma2 method must be finite_rank or smoothed");
      } else {
        const double beta = est_method == "loglog" ? estimate_beta_loglog(ctx.eig) : estimate_beta(ctx.eig);
        if (est_what == "beta") {
          emit(json{{"beta_hat", beta}, {"method", est_method == "loglog" ? "loglog" : "top_two"}});
        } else {
          const auto a = default_alpha(beta);
          emit(json{{"alpha", a.alpha}, {"beta_hat", beta}, {"outside_regime", a.outside_regime}});
        }
      }
    } else if (*cpx) {
      std::vector<double> xs;
      if (!cpx_data.empty()) {
        xs = load_dataset_csv(cpx_data).sample.xs;
      } else if (cpx_n) {
        for (int i = 1; i <= *cpx_n; ++i) xs.push_back(static_cast<double>(i) / *cpx_n);
      } else {
        throw ConfigError("complexity needs --data or --n");
      }
      const auto eig = spectrum_of(build_gram(cpx_k.build(), xs), cpx_rank_tol);
      const double alpha = resolve_alpha(parse_alpha(cpx_alpha), eig);
      json j = to_json(assumption_audit(eig, alpha, cpx_radius, cpx_sigma));
      j["n"] = eig.n;
      j["rank"] = eig.rank;
      emit(j);
    } else if (*eg) {
      const auto xs = load_dataset_csv(eg_data).sample.xs;
      emit(to_json(spectrum_of(build_gram(eg_k.build(), xs), eg_rank_tol)));
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
