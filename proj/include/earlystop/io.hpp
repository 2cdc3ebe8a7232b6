#pragma once

// JSON configuration and reports, CSV export and a small dataset loader.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "earlystop/complexity.hpp"
#include "earlystop/errors.hpp"
#include "earlystop/estimators.hpp"
#include "earlystop/kernel.hpp"
#include "earlystop/simulation.hpp"
#include "earlystop/stopping_rules.hpp"

namespace earlystop {

using json = nlohmann::ordered_json;

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---------------------------------------------------------------------------
// Config parsing

inline KernelKind kernel_from_json(const json& j) {
  const std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  KernelKind k;
  if (kind == "sobolev_min" || kind == "min") k = SobolevMin{};
  else if (kind == "polynomial") k = Polynomial{j.is_object() ? j.value("degree", 3) : 3};
  else if (kind == "gaussian") k = Gaussian{j.at("bandwidth").get<double>()};
  else if (kind == "laplace") k = Laplace{j.at("bandwidth").get<double>()};
  else throw ConfigError("unknown kernel kind '" + kind + "'");
  validate(k);
  return k;
}

inline json kernel_to_json(const KernelKind& k) {
  json j;
  j["kind"] = kernel_name(k);
  if (const auto* p = std::get_if<Polynomial>(&k)) j["degree"] = p->degree;
  if (const auto* g = std::get_if<Gaussian>(&k)) j["bandwidth"] = g->bandwidth;
  if (const auto* l = std::get_if<Laplace>(&k)) j["bandwidth"] = l->bandwidth;
  return j;
}

inline FilterFamily family_from_string(const std::string& s) {
  if (s == "gd" || s == "gradient_descent") return FilterFamily::GradientDescent;
  if (s == "krr" || s == "kernel_ridge") return FilterFamily::KernelRidge;
  throw ConfigError("unknown filter family '" + s + "'");
}

namespace detail {

inline std::optional<double> auto_or_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "auto") return std::nullopt;
    throw ConfigError(std::string(key) + " must be \"auto\" or a number");
  }
  return v.get<double>();
}

inline json number_or_auto(const std::optional<double>& v) { return v ? json(*v) : json("auto"); }

}  // namespace detail

inline FilterPolicy filter_from_json(const json& j) {
  FilterPolicy p;
  p.family = family_from_string(j.value("family", std::string("gd")));
  p.eta = detail::auto_or_number(j, "eta");
  p.t_max = detail::auto_or_number(j, "t_max");
  return p;
}

inline json filter_to_json(const FilterPolicy& p) {
  json j;
  j["family"] = to_string(p.family);
  j["eta"] = detail::number_or_auto(p.eta);
  j["t_max"] = detail::number_or_auto(p.t_max);
  return j;
}

inline RegressionFunction target_from_json(const json& j) {
  const std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  if (kind == "piecewise_linear") return PiecewiseLinear{};
  if (kind == "heavisine") return Heavisine{};
  if (kind == "sinus") return Sinus{};
  if (kind == "tabulated") {
    Tabulated t{j.at("x").get<std::vector<double>>(), j.at("y").get<std::vector<double>>()};
    RegressionFunction f = t;
    validate(f);
    return f;
  }
  throw ConfigError("unknown target '" + kind + "'");
}

inline json target_to_json(const RegressionFunction& f) {
  if (const auto* t = std::get_if<Tabulated>(&f)) return json{{"kind", "tabulated"}, {"x", t->xs}, {"y", t->ys}};
  return target_name(f);
}

inline RuleSpec rule_from_json(const json& j) {
  RuleSpec r;
  r.rule = stop_rule_from_string(j.is_string() ? j.get<std::string>() : j.at("name").get<std::string>());
  const bool smoothed = r.rule == StopRule::SmoothedMDP;
  if (j.is_object() && j.contains("alpha")) {
    r.alpha = detail::auto_or_number(j, "alpha");
  } else {
    r.alpha = smoothed ? std::nullopt : std::optional<double>(0.0);
  }
  if (r.rule == StopRule::MDP && r.alpha && *r.alpha != 0.0) r.rule = StopRule::SmoothedMDP;
  if (r.rule == StopRule::MDP && !r.alpha) r.rule = StopRule::SmoothedMDP;
  return r;
}

inline json rule_to_json(const RuleSpec& r) {
  json j;
  j["name"] = to_string(r.rule);
  if (r.uses_alpha()) j["alpha"] = detail::number_or_auto(r.alpha);
  return j;
}

/// sigma: number | "known:<v>" | "estimate:finite_rank" | "estimate:smoothed".
/// With an estimate, the data-generating level comes from "noise_sigma".
inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"));
    if (j.contains("filter")) c.filter = filter_from_json(j.at("filter"));
    if (j.contains("target")) c.target = target_from_json(j.at("target"));
    if (j.contains("design")) {
      const auto d = j.at("design").get<std::string>();
      if (d == "equidistant") c.design = Design::Equidistant;
      else if (d == "uniform") c.design = Design::UniformRandom;
      else throw ConfigError("unknown design '" + d + "'");
    }
    if (j.contains("sigma")) {
      const auto& s = j.at("sigma");
      if (s.is_number()) {
        c.sigma = s.get<double>();
      } else {
        const auto str = s.get<std::string>();
        if (str.rfind("known:", 0) == 0) {
          c.sigma = std::stod(str.substr(6));
        } else if (str == "estimate:finite_rank" || str == "estimate:smoothed") {
          c.noise = str == "estimate:smoothed" ? NoiseSource::Smoothed : NoiseSource::FiniteRank;
          if (!j.contains("noise_sigma")) throw ConfigError("an estimated sigma needs noise_sigma for data generation");
          c.sigma = j.at("noise_sigma").get<double>();
        } else {
          throw ConfigError("sigma must be a number, \"known:<v>\" or \"estimate:<method>\"");
        }
      }
    }
    if (j.contains("noise_horizon")) c.noise_horizon = j.at("noise_horizon").get<double>();
    if (j.contains("n_grid")) c.n_grid = j.at("n_grid").get<std::vector<int>>();
    c.n_trials = j.value("n_trials", c.n_trials);
    if (j.contains("rules"))
      for (const auto& r : j.at("rules")) c.rules.push_back(rule_from_json(r));
    c.master_seed = j.value("master_seed", c.master_seed);
    c.radius = j.value("radius", c.radius);
    c.folds = j.value("folds", c.folds);
    c.rank_tol = j.value("rank_tol", c.rank_tol);
    if (j.contains("oracle_risk")) {
      const auto m = j.at("oracle_risk").get<std::string>();
      if (m == "expected") c.oracle_risk = OracleRisk::Expected;
      else if (m == "realized") c.oracle_risk = OracleRisk::Realized;
      else throw ConfigError("oracle_risk must be \"expected\" or \"realized\"");
    }
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  if (path.extension() != ".json") throw ConfigError("only JSON config files are supported");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

/// Normalized echo. The thread count is omitted: it never changes the results.
inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["kernel"] = kernel_to_json(c.kernel);
  j["filter"] = filter_to_json(c.filter);
  j["target"] = target_to_json(c.target);
  j["design"] = to_string(c.design);
  j["sigma"] = c.noise == NoiseSource::Known ? json("known:" + format_double(c.sigma)) : json(to_string(c.noise));
  j["noise_sigma"] = c.sigma;
  if (c.noise_horizon) j["noise_horizon"] = *c.noise_horizon;
  j["n_grid"] = c.n_grid;
  j["n_trials"] = c.n_trials;
  j["rules"] = json::array();
  for (const auto& r : c.rules) j["rules"].push_back(rule_to_json(r));
  j["master_seed"] = c.master_seed;
  j["radius"] = c.radius;
  j["folds"] = c.folds;
  j["rank_tol"] = c.rank_tol;
  j["oracle_risk"] = c.oracle_risk == OracleRisk::Expected ? "expected" : "realized";
  return j;
}

// ---------------------------------------------------------------------------
// Results as JSON

inline json to_json(const StoppingOutcome& o) {
  return json{{"rule", to_string(o.rule)},
              {"t_stop", o.t_stop},
              {"alpha", optional_json(o.alpha)},
              {"threshold", optional_json(o.threshold)},
              {"hit_boundary", o.hit_boundary},
              {"seed", optional_json(o.seed)}};
}

inline json to_json(const EigenSystem& eig) {
  return json{{"n", eig.n},
              {"rank", eig.rank},
              {"rank_tol", eig.rank_tol},
              {"eigenvalues", std::vector<double>(eig.eigenvalues.data(), eig.eigenvalues.data() + eig.n)},
              {"warnings", eig.warnings}};
}

inline json to_json(const NoiseEstimate& e) {
  return json{{"sigma2_hat", e.sigma2_hat}, {"method", to_string(e.method)}, {"t_used", optional_json(e.t_used)}};
}

inline json to_json(const AssumptionAudit& a) {
  return json{{"alpha", a.alpha},
              {"epsilon_hat", a.radius.epsilon_hat},
              {"epsilon_hat_sq", a.radius.epsilon_hat * a.radius.epsilon_hat},
              {"d_stat", a.radius.d_stat},
              {"a_const", a.a_const},
              {"m_const", a.m_const},
              {"beta_hat", optional_json(a.beta_hat)},
              {"residual", a.radius.residual},
              {"iterations", a.radius.iterations},
              {"warnings", a.radius.warnings}};
}

inline json to_json(const TrialRecord& r) {
  return json{{"rule", r.label},
              {"alpha", optional_json(r.alpha)},
              {"t_stop", optional_json(r.t_stop)},
              {"error", optional_json(r.error)},
              {"hit_boundary", r.hit_boundary},
              {"failure", optional_json(r.failure)}};
}

inline json to_json(const ExperimentReport& rep) {
  json j;
  j["config"] = config_to_json(rep.config);
  j["seed_scheme"] = kSeedScheme;
  j["generator"] = kGeneratorName;
  j["summary"] = json::array();
  for (const auto& s : rep.summary)
    j["summary"].push_back(json{{"rule", s.label},
                                {"n", s.n},
                                {"count", s.count},
                                {"failures", s.failures},
                                {"mean_error", s.mean_error},
                                {"se_error", s.se_error},
                                {"mean_t", s.mean_t},
                                {"sd_t", s.sd_t},
                                {"boundary_rate", s.boundary_rate}});
  j["trials"] = json::array();
  for (const auto& t : rep.trials) {
    json tj{{"n", t.n},
            {"trial", t.trial},
            {"seed", t.seed},
            {"sigma2_used", optional_json(t.sigma2_used)},
            {"beta_hat", optional_json(t.beta_hat)},
            {"warnings", t.warnings}};
    tj["records"] = json::array();
    for (const auto& r : t.records) tj["records"].push_back(to_json(r));
    j["trials"].push_back(std::move(tj));
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string csv_text(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace detail

inline void write_errors_csv(std::ostream& os, const ExperimentReport& rep) {
  os << "rule,n,count,failures,mean_error,se_error,mean_t,sd_t,boundary_rate\n";
  for (const auto& s : rep.summary)
    os << detail::csv_text(s.label) << ',' << s.n << ',' << s.count << ',' << s.failures << ','
       << format_double(s.mean_error) << ',' << format_double(s.se_error) << ',' << format_double(s.mean_t) << ','
       << format_double(s.sd_t) << ',' << format_double(s.boundary_rate) << '\n';
}

/// One row per (n, trial, rule): the raw samples behind stopping-time histograms.
inline void write_stopping_times_csv(std::ostream& os, const ExperimentReport& rep) {
  os << "n,trial,seed,rule,alpha,t_stop,error,hit_boundary,failure\n";
  for (const auto& t : rep.trials)
    for (const auto& r : t.records)
      os << t.n << ',' << t.trial << ',' << t.seed << ',' << detail::csv_text(r.label) << ','
         << detail::csv_opt(r.alpha) << ',' << detail::csv_opt(r.t_stop) << ',' << detail::csv_opt(r.error) << ','
         << (r.hit_boundary ? 1 : 0) << ',' << detail::csv_text(r.failure.value_or("")) << '\n';
}

inline void write_curves_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
  os << "t,bias2,variance,risk,empirical_risk,reduced_risk\n";
  for (const auto& r : rows)
    os << format_double(r.t) << ',' << format_double(r.bias2) << ',' << format_double(r.variance) << ','
       << format_double(r.risk) << ',' << format_double(r.empirical_risk) << ',' << format_double(r.reduced_risk)
       << '\n';
}

/// report.json, errors.csv and stopping_times.csv under dir.
inline void write_report(const std::filesystem::path& dir, const ExperimentReport& rep) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("report.json");
    f << to_json(rep).dump(2) << '\n';
  }
  {
    auto f = open("errors.csv");
    write_errors_csv(f, rep);
  }
  {
    auto f = open("stopping_times.csv");
    write_stopping_times_csv(f, rep);
  }
}

// ---------------------------------------------------------------------------
// Dataset loader

struct LoadedDataset {
  DesignSample sample;
  std::optional<Vector> f_star;
};

/// Comma-separated x,y or x,y,f_star rows; a non-numeric first line is a header.
inline LoadedDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  LoadedDataset d;
  std::vector<double> fs;
  std::string line;
  std::size_t lineno = 0;
  int columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (lineno == 1) continue;
      throw InputError("non-numeric value on line " + std::to_string(lineno));
    }
    if (vals.size() != 2 && vals.size() != 3) throw InputError("dataset rows need 2 or 3 columns");
    if (columns == 0) columns = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != columns) throw InputError("inconsistent column count on line " + std::to_string(lineno));
    d.sample.xs.push_back(vals[0]);
    d.sample.ys.push_back(vals[1]);
    if (columns == 3) fs.push_back(vals[2]);
  }
  d.sample.validate();
  if (columns == 3) d.f_star = Eigen::Map<const Vector>(fs.data(), static_cast<Eigen::Index>(fs.size()));
  return d;
}

}  // namespace earlystop
