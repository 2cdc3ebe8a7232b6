#pragma once

// Regression functions, synthetic data and the seeded multi-trial experiment
// runner. Every trial's seed is fixed before dispatch, so a report is a pure
// function of its configuration regardless of the thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "earlystop/errors.hpp"
#include "earlystop/estimators.hpp"
#include "earlystop/filters.hpp"
#include "earlystop/kernel.hpp"
#include "earlystop/random.hpp"
#include "earlystop/stopping_rules.hpp"

namespace earlystop {

// ---------------------------------------------------------------------------
// Regression functions

/// |x - 1/2| - 1/2
struct PiecewiseLinear {};
/// 0.093 [4 sin(4 pi x) - sign(x - 0.3) - sign(0.72 - x)], sign(0) = 0.
struct Heavisine {};
/// 0.9 sin(8 pi x) x^2
struct Sinus {};

/// Values on a sorted grid, linearly interpolated and held constant outside it.
struct Tabulated {
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Arbitrary callable; cannot be written back into a config file.
struct Callable {
  std::function<double(double)> fn;
  std::string name = "callable";
};

using RegressionFunction = std::variant<PiecewiseLinear, Heavisine, Sinus, Tabulated, Callable>;

namespace detail {
inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

inline void validate(const RegressionFunction& f) {
  if (const auto* t = std::get_if<Tabulated>(&f)) {
    if (t->xs.size() != t->ys.size() || t->xs.empty()) throw ConfigError("tabulated target needs matching nonempty x and y");
    if (!std::is_sorted(t->xs.begin(), t->xs.end())) throw ConfigError("tabulated target grid must be sorted");
  }
  if (const auto* c = std::get_if<Callable>(&f))
    if (!c->fn) throw ConfigError("callable target is empty");
}

inline double evaluate(const RegressionFunction& f, double x) {
  return std::visit(
      [x](const auto& g) -> double {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, PiecewiseLinear>) {
          return std::abs(x - 0.5) - 0.5;
        } else if constexpr (std::is_same_v<G, Heavisine>) {
          return 0.093 * (4.0 * std::sin(4.0 * std::numbers::pi * x) - detail::sign0(x - 0.3) -
                          detail::sign0(0.72 - x));
        } else if constexpr (std::is_same_v<G, Sinus>) {
          return 0.9 * std::sin(8.0 * std::numbers::pi * x) * x * x;
        } else if constexpr (std::is_same_v<G, Tabulated>) {
          if (x <= g.xs.front()) return g.ys.front();
          if (x >= g.xs.back()) return g.ys.back();
          const auto it = std::upper_bound(g.xs.begin(), g.xs.end(), x);
          const auto j = static_cast<std::size_t>(it - g.xs.begin());
          const double w = (x - g.xs[j - 1]) / (g.xs[j] - g.xs[j - 1]);
          return (1.0 - w) * g.ys[j - 1] + w * g.ys[j];
        } else {
          return g.fn(x);
        }
      },
      f);
}

inline std::string target_name(const RegressionFunction& f) {
  return std::visit(
      [](const auto& g) -> std::string {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, PiecewiseLinear>) return "piecewise_linear";
        else if constexpr (std::is_same_v<G, Heavisine>) return "heavisine";
        else if constexpr (std::is_same_v<G, Sinus>) return "sinus";
        else if constexpr (std::is_same_v<G, Tabulated>) return "tabulated";
        else return g.name;
      },
      f);
}

// ---------------------------------------------------------------------------
// Configuration

enum class Design { Equidistant, UniformRandom };

inline std::string to_string(Design d) { return d == Design::Equidistant ? "equidistant" : "uniform"; }

/// How the rules that need sigma^2 obtain it.
enum class NoiseSource { Known, FiniteRank, Smoothed };

inline std::string to_string(NoiseSource s) {
  switch (s) {
    case NoiseSource::Known: return "known";
    case NoiseSource::FiniteRank: return "estimate:finite_rank";
    case NoiseSource::Smoothed: return "estimate:smoothed";
  }
  return "unknown";
}

/// A rule plus its smoothing level; nullopt alpha means alpha = 1/(beta_hat + 1).
struct RuleSpec {
  StopRule rule = StopRule::MDP;
  std::optional<double> alpha = 0.0;

  bool uses_alpha() const {
    return rule == StopRule::SmoothedMDP || rule == StopRule::TheoreticalMDP || rule == StopRule::Balancing;
  }

  std::string label() const {
    if (!uses_alpha()) return to_string(rule);
    if (!alpha) return to_string(rule) + "[alpha=auto]";
    char buf[64];
    std::snprintf(buf, sizeof buf, "[alpha=%g]", *alpha);
    return to_string(rule) + buf;
  }
};

struct ExperimentConfig {
  KernelKind kernel = SobolevMin{};
  FilterPolicy filter;
  RegressionFunction target = PiecewiseLinear{};
  Design design = Design::Equidistant;
  double sigma = 0.15;
  NoiseSource noise = NoiseSource::Known;
  std::optional<double> noise_horizon;
  std::vector<int> n_grid{40, 80, 120, 200, 320, 400};
  int n_trials = 100;
  std::vector<RuleSpec> rules;
  std::uint64_t master_seed = 0;
  double radius = 1.0;
  int folds = 4;
  double rank_tol = kDefaultRankTol;
  OracleRisk oracle_risk = OracleRisk::Expected;
  unsigned threads = 1;

  void validate() const {
    earlystop::validate(kernel);
    earlystop::validate(target);
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    if (n_grid.empty()) throw ConfigError("n_grid must be nonempty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] < 2) throw ConfigError("every sample size must be >= 2");
      if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n_grid must be strictly ascending");
    }
    if (rules.empty()) throw ConfigError("at least one stopping rule is required");
    for (const auto& r : rules)
      if (r.alpha) check_alpha(*r.alpha);
    if (!(radius > 0.0)) throw ConfigError("radius must be positive");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (!(rank_tol > 0.0 && rank_tol < 1.0)) throw ConfigError("rank_tol must lie in (0,1)");
    if (filter.eta && !(*filter.eta > 0.0)) throw ConfigError("eta must be positive");
    if (filter.t_max && !(*filter.t_max > 0.0)) throw ConfigError("t_max must be positive");
  }
};

// ---------------------------------------------------------------------------
// Seeds and data

inline constexpr const char* kSeedScheme =
    "trial_seed = splitmix64(master_seed, (n_index << 32) + trial + 1); "
    "holdout split = splitmix64(trial_seed, 1); vfold split = splitmix64(trial_seed, 2); "
    "design and noise drawn in that order from mt19937_64(trial_seed)";

inline std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t n_index, std::size_t trial) {
  return splitmix64(master_seed, (static_cast<std::uint64_t>(n_index) << 32) + trial + 1);
}

inline std::uint64_t holdout_seed(std::uint64_t seed) { return splitmix64(seed, 1); }
inline std::uint64_t vfold_seed(std::uint64_t seed) { return splitmix64(seed, 2); }

struct Dataset {
  DesignSample sample;
  Vector f_star;
};

/// y_j = f*(x_j) + sigma eps_j with x_j = j/n or i.i.d. uniform on [0,1].
inline Dataset generate_dataset(const ExperimentConfig& config, int n, std::uint64_t seed) {
  if (n < 2) throw InputError("sample size must be >= 2");
  Rng rng(seed);
  Dataset d;
  const auto un = static_cast<std::size_t>(n);
  d.sample.xs.resize(un);
  d.sample.ys.resize(un);
  d.f_star.resize(n);
  for (std::size_t j = 0; j < un; ++j)
    d.sample.xs[j] = config.design == Design::Equidistant ? static_cast<double>(j + 1) / static_cast<double>(n)
                                                          : rng.uniform();
  for (std::size_t j = 0; j < un; ++j) {
    const double f = evaluate(config.target, d.sample.xs[j]);
    d.f_star(static_cast<Eigen::Index>(j)) = f;
    d.sample.ys[j] = f + config.sigma * rng.normal();
  }
  return d;
}

// ---------------------------------------------------------------------------
// Trials

struct TrialRecord {
  std::string label;
  StopRule rule = StopRule::MDP;
  std::optional<double> alpha;
  std::optional<double> t_stop;
  std::optional<double> error;
  bool hit_boundary = false;
  std::optional<std::string> failure;
};

struct TrialResult {
  int n = 0;
  std::size_t n_index = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::optional<double> sigma2_used;
  std::optional<double> beta_hat;
  std::vector<TrialRecord> records;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string describe(const std::exception& e) { return e.what(); }

}  // namespace detail

/// Builds the eigensystem once and evaluates every configured rule on the same
/// dataset. A failing rule is recorded with its message; the others still run.
inline TrialResult run_trial(const ExperimentConfig& config, int n, std::uint64_t seed) {
  TrialResult res;
  res.n = n;
  res.seed = seed;
  for (const auto& r : config.rules) {
    TrialRecord rec;
    rec.label = r.label();
    rec.rule = r.rule;
    res.records.push_back(rec);
  }
  auto fail_all = [&](const std::string& msg) {
    for (auto& rec : res.records) rec.failure = msg;
    return res;
  };

  Dataset data;
  EigenSystem eig;
  FilterSpec spec;
  try {
    data = generate_dataset(config, n, seed);
    eig = eigensystem(build_gram(config.kernel, data.sample.xs), config.rank_tol);
    spec = config.filter.resolve(eig);
  } catch (const std::exception& e) {
    return fail_all(detail::describe(e));
  }
  res.warnings = eig.warnings;
  const double true_sigma2 = config.sigma * config.sigma;
  const RotatedSample rot = rotate(eig, data.sample.responses(), data.f_star, true_sigma2);

  std::optional<std::string> sigma_failure;
  try {
    switch (config.noise) {
      case NoiseSource::Known: res.sigma2_used = true_sigma2; break;
      case NoiseSource::FiniteRank: res.sigma2_used = estimate_sigma_finite_rank(rot, eig).sigma2_hat; break;
      case NoiseSource::Smoothed:
        res.sigma2_used = estimate_sigma_smoothed(rot, eig, spec, config.noise_horizon).sigma2_hat;
        break;
    }
  } catch (const std::exception& e) {
    sigma_failure = detail::describe(e);
  }

  std::optional<AlphaChoice> auto_alpha;
  std::optional<std::string> alpha_failure;
  try {
    res.beta_hat = estimate_beta(eig);
    auto_alpha = default_alpha(*res.beta_hat);
    if (auto_alpha->outside_regime) res.warnings.emplace_back("beta_hat <= 1: automatic alpha fell back to 0.5");
  } catch (const std::exception& e) {
    alpha_failure = detail::describe(e);
  }

  for (std::size_t k = 0; k < config.rules.size(); ++k) {
    const RuleSpec& rs = config.rules[k];
    TrialRecord& rec = res.records[k];
    try {
      double alpha = 0.0;
      if (rs.uses_alpha()) {
        if (rs.alpha) {
          alpha = *rs.alpha;
        } else {
          if (!auto_alpha) throw StateError(*alpha_failure);
          alpha = auto_alpha->alpha;
        }
        rec.alpha = alpha;
      }
      auto need_sigma2 = [&]() {
        if (!res.sigma2_used) throw StateError(*sigma_failure);
        return *res.sigma2_used;
      };
      StoppingOutcome out;
      switch (rs.rule) {
        case StopRule::MDP: out = mdp_stop(rot, eig, spec, 0.0, need_sigma2()); break;
        case StopRule::SmoothedMDP: out = mdp_stop(rot, eig, spec, alpha, need_sigma2()); break;
        case StopRule::TheoreticalMDP: out = theoretical_mdp_stop(rot, eig, spec, alpha); break;
        case StopRule::Balancing: out = balancing_stop(rot, eig, spec, alpha); break;
        case StopRule::Oracle: out = oracle_stop(rot, eig, spec, config.oracle_risk); break;
        case StopRule::RWY: out = rwy_stop(eig, spec, std::sqrt(need_sigma2()), config.radius); break;
        case StopRule::HoldOut:
          out = holdout_stop(data.sample, config.kernel, config.filter, holdout_seed(seed), config.rank_tol);
          break;
        case StopRule::VFold:
          out = vfold_stop(data.sample, config.kernel, config.filter, config.folds, vfold_seed(seed),
                           config.rank_tol);
          break;
      }
      rec.t_stop = out.t_stop;
      rec.hit_boundary = out.hit_boundary;
      rec.error = estimation_error(spec, eig, rot, out.t_stop);
    } catch (const std::exception& e) {
      rec.failure = detail::describe(e);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Experiments

struct SummaryRow {
  std::string label;
  int n = 0;
  int count = 0;     // successful trials
  int failures = 0;
  double mean_error = 0.0;
  double se_error = 0.0;
  double mean_t = 0.0;
  double sd_t = 0.0;
  double boundary_rate = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<TrialResult> trials;  // ordered by (n_index, trial)
  std::vector<SummaryRow> summary;  // ordered by (n_index, rule)

  const SummaryRow* find(const std::string& label, int n) const {
    for (const auto& row : summary)
      if (row.label == label && row.n == n) return &row;
    return nullptr;
  }
};

namespace detail {

/// Mean and sample standard deviation (n - 1 denominator; 0 for a single value).
inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace detail

inline std::vector<SummaryRow> summarize(const ExperimentConfig& config, const std::vector<TrialResult>& trials) {
  std::vector<SummaryRow> rows;
  for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
    for (std::size_t k = 0; k < config.rules.size(); ++k) {
      SummaryRow row;
      row.label = config.rules[k].label();
      row.n = config.n_grid[ni];
      std::vector<double> errs, ts;
      int boundary = 0;
      for (const auto& tr : trials) {
        if (tr.n_index != ni) continue;
        const auto& rec = tr.records[k];
        if (rec.failure || !rec.error) {
          ++row.failures;
          continue;
        }
        errs.push_back(*rec.error);
        ts.push_back(*rec.t_stop);
        if (rec.hit_boundary) ++boundary;
      }
      row.count = static_cast<int>(errs.size());
      const auto [me, sde] = detail::mean_sd(errs);
      const auto [mt, sdt] = detail::mean_sd(ts);
      row.mean_error = me;
      row.se_error = errs.empty() ? 0.0 : sde / std::sqrt(static_cast<double>(errs.size()));
      row.mean_t = mt;
      row.sd_t = sdt;
      row.boundary_rate = errs.empty() ? 0.0 : static_cast<double>(boundary) / static_cast<double>(errs.size());
      rows.push_back(row);
    }
  }
  return rows;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.config = config;
  const std::size_t per_n = static_cast<std::size_t>(config.n_trials);
  const std::size_t jobs = config.n_grid.size() * per_n;
  report.trials.resize(jobs);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t ni = j / per_n, trial = j % per_n;
      TrialResult tr = run_trial(config, config.n_grid[ni], trial_seed(config.master_seed, ni, trial));
      tr.n_index = ni;
      tr.trial = trial;
      report.trials[j] = std::move(tr);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(jobs)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  report.summary = summarize(config, report.trials);
  return report;
}

// ---------------------------------------------------------------------------
// Curves

struct CurveRow {
  double t = 0.0;
  double bias2 = 0.0;
  double variance = 0.0;
  double risk = 0.0;
  double empirical_risk = 0.0;
  double reduced_risk = 0.0;
};

/// n_points log-spaced times from t_min to t_max inclusive.
inline std::vector<double> log_time_grid(double t_min, double t_max, int n_points) {
  if (!(t_min > 0.0) || !(t_max > t_min) || n_points < 2) throw InputError("invalid time grid");
  std::vector<double> g(static_cast<std::size_t>(n_points));
  const double a = std::log(t_min), b = std::log(t_max);
  for (int i = 0; i < n_points; ++i)
    g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (n_points - 1));
  g.front() = t_min;
  g.back() = t_max;
  return g;
}

inline std::vector<CurveRow> emit_curves(const RotatedSample& rot, const EigenSystem& eig, const FilterSpec& spec,
                                         const std::vector<double>& t_grid) {
  rot.require_g_star();
  rot.require_sigma2();
  std::vector<CurveRow> rows;
  rows.reserve(t_grid.size());
  for (double t : t_grid) {
    const auto d = oracle_decomposition(rot, eig, spec, t, 0.0);
    CurveRow row;
    row.t = t;
    row.bias2 = d.bias2;
    row.variance = d.variance;
    row.risk = d.risk;
    row.empirical_risk = empirical_risk_full(rot, eig, spec, t);
    row.reduced_risk = smoothed_reduced_risk(rot, eig, spec, t, 0.0);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace earlystop
