#pragma once

// Stopping rules. Rules defined as an infimum over continuous time are solved
// by geometric bisection on [t_min, t_max]; rules defined on the iteration
// counter scan t = 0, 1, 2, ... until their first-increase condition fires.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "earlystop/complexity.hpp"
#include "earlystop/errors.hpp"
#include "earlystop/filters.hpp"
#include "earlystop/kernel.hpp"
#include "earlystop/random.hpp"

namespace earlystop {

enum class StopRule { MDP, SmoothedMDP, TheoreticalMDP, Balancing, Oracle, RWY, HoldOut, VFold };

inline std::string to_string(StopRule r) {
  switch (r) {
    case StopRule::MDP: return "mdp";
    case StopRule::SmoothedMDP: return "smoothed_mdp";
    case StopRule::TheoreticalMDP: return "theoretical_mdp";
    case StopRule::Balancing: return "balancing";
    case StopRule::Oracle: return "oracle";
    case StopRule::RWY: return "rwy";
    case StopRule::HoldOut: return "holdout";
    case StopRule::VFold: return "vfold";
  }
  return "unknown";
}

inline StopRule stop_rule_from_string(const std::string& s) {
  for (auto r : {StopRule::MDP, StopRule::SmoothedMDP, StopRule::TheoreticalMDP, StopRule::Balancing,
                 StopRule::Oracle, StopRule::RWY, StopRule::HoldOut, StopRule::VFold})
    if (to_string(r) == s) return r;
  throw ConfigError("unknown stopping rule '" + s + "'");
}

struct StoppingOutcome {
  StopRule rule = StopRule::MDP;
  double t_stop = 0.0;
  std::optional<double> alpha;
  std::optional<double> threshold;
  bool hit_boundary = false;
  std::optional<std::uint64_t> seed;
};

struct BisectionOptions {
  std::optional<double> t_min;  // default 1e-6 / eta
  std::optional<double> t_max;  // default spec.t_max
  double rel_tol = 1e-6;
  int max_iterations = 200;
};

namespace detail {

struct Crossing {
  double t = 0.0;
  bool boundary = false;
};

/// Smallest t in [lo, hi] with phi(t) <= level, phi nonincreasing.
inline Crossing first_crossing(const std::function<double(double)>& phi, double level, double lo, double hi,
                               double rel_tol, int max_iterations) {
  if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("invalid time bracket for bisection");
  if (phi(lo) <= level) return {lo, true};
  if (phi(hi) > level) return {hi, true};
  for (int it = 0; it < max_iterations && hi - lo > rel_tol * hi; ++it) {
    const double mid = (hi / lo > 4.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (phi(mid) <= level) hi = mid;
    else lo = mid;
  }
  return {hi, false};
}

inline std::pair<double, double> bracket(const FilterSpec& spec, const BisectionOptions& opt) {
  return {opt.t_min ? *opt.t_min : 1e-6 / spec.eta, opt.t_max ? *opt.t_max : spec.t_max};
}

}  // namespace detail

/// First t in {0, 1, ..., t_last - 1} with risk(t + 1) > risk(t) (strict), i.e.
/// the last iterate before the sequence first increases. Returns t_last when
/// no increase occurs.
inline detail::Crossing first_increase_time(const std::function<double(std::int64_t)>& risk,
                                            std::int64_t t_last) {
  if (t_last < 0) throw ConfigError("negative scan horizon");
  double prev = risk(0);
  for (std::int64_t t = 0; t < t_last; ++t) {
    const double next = risk(t + 1);
    if (next > prev) return {static_cast<double>(t), t == 0};
    prev = next;
  }
  return {static_cast<double>(t_last), true};
}

inline std::int64_t integer_horizon(double t_max) {
  return static_cast<std::int64_t>(std::floor(t_max));
}

// ---------------------------------------------------------------------------
// Minimum discrepancy rules

/// tau_alpha = inf{ t > 0 : R_{alpha,t} <= sigma^2 tr(K_n^alpha) / n }; alpha = 0
/// is the plain rule on the reduced empirical risk.
inline StoppingOutcome mdp_stop(const RotatedSample& rot, const EigenSystem& eig, const FilterSpec& spec,
                                double alpha, double sigma2, const BisectionOptions& opt = {}) {
  check_alpha(alpha);
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InputError("noise variance must be positive");
  const double kappa = discrepancy_threshold(eig, alpha, sigma2);
  std::vector<double> weights(static_cast<std::size_t>(eig.rank));
  for (Eigen::Index i = 0; i < eig.rank; ++i)
    weights[static_cast<std::size_t>(i)] = std::pow(eig.eigenvalues(i), alpha) * rot.z(i) * rot.z(i);
  const double inv_n = 1.0 / static_cast<double>(eig.n);
  auto risk = [&](double t) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eig.rank; ++i) {
      const double s = 1.0 - shrinkage_gamma(spec, eig.eigenvalues(i), t);
      acc += weights[static_cast<std::size_t>(i)] * s * s;
    }
    return acc * inv_n;
  };
  const auto [lo, hi] = detail::bracket(spec, opt);
  const auto c = detail::first_crossing(risk, kappa, lo, hi, opt.rel_tol, opt.max_iterations);
  StoppingOutcome out;
  out.rule = alpha == 0.0 ? StopRule::MDP : StopRule::SmoothedMDP;
  out.t_stop = c.t;
  out.alpha = alpha;
  out.threshold = kappa;
  out.hit_boundary = c.boundary;
  return out;
}

/// t*_alpha = inf{ t > 0 : E R_{alpha,t} <= sigma^2 tr(K_n^alpha) / n } with the
/// expectation in closed form.
inline StoppingOutcome theoretical_mdp_stop(const RotatedSample& rot, const EigenSystem& eig,
                                            const FilterSpec& spec, double alpha,
                                            const BisectionOptions& opt = {}) {
  check_alpha(alpha);
  rot.require_g_star();
  const double kappa = discrepancy_threshold(eig, alpha, rot.require_sigma2());
  auto risk = [&](double t) { return expected_smoothed_risk(rot, eig, spec, t, alpha); };
  const auto [lo, hi] = detail::bracket(spec, opt);
  const auto c = detail::first_crossing(risk, kappa, lo, hi, opt.rel_tol, opt.max_iterations);
  StoppingOutcome out;
  out.rule = StopRule::TheoreticalMDP;
  out.t_stop = c.t;
  out.alpha = alpha;
  out.threshold = kappa;
  out.hit_boundary = c.boundary;
  return out;
}

/// t^b_alpha = inf{ t > 0 : B^2_alpha(t) <= V_alpha(t) }.
inline StoppingOutcome balancing_stop(const RotatedSample& rot, const EigenSystem& eig, const FilterSpec& spec,
                                      double alpha, const BisectionOptions& opt = {}) {
  check_alpha(alpha);
  auto gap = [&](double t) {
    const auto d = oracle_decomposition(rot, eig, spec, t, alpha);
    return d.bias2_alpha - d.variance_alpha;
  };
  const auto [lo, hi] = detail::bracket(spec, opt);
  const auto c = detail::first_crossing(gap, 0.0, lo, hi, opt.rel_tol, opt.max_iterations);
  StoppingOutcome out;
  out.rule = StopRule::Balancing;
  out.t_stop = c.t;
  out.alpha = alpha;
  out.threshold = 0.0;
  out.hit_boundary = c.boundary;
  return out;
}

enum class OracleRisk { Expected, Realized };

/// Last iteration before the risk ||f^t - f*||_n^2 first increases. The expected
/// risk B^2 + V is the default; the realized error is available for comparison.
inline StoppingOutcome oracle_stop(const RotatedSample& rot, const EigenSystem& eig, const FilterSpec& spec,
                                   OracleRisk mode = OracleRisk::Expected) {
  rot.require_g_star();
  rot.require_sigma2();
  auto risk = [&](std::int64_t t) {
    const double td = static_cast<double>(t);
    if (mode == OracleRisk::Realized) return estimation_error(spec, eig, rot, td);
    return oracle_decomposition(rot, eig, spec, td, 0.0).risk;
  };
  const auto c = first_increase_time(risk, integer_horizon(spec.t_max));
  StoppingOutcome out;
  out.rule = StopRule::Oracle;
  out.t_stop = c.t;
  out.hit_boundary = c.boundary;
  return out;
}

/// Last integer t before R_hat_n(1/sqrt(eta t)) > 1/(2 e sigma eta t) first holds.
/// t * R_hat_n(1/sqrt(eta t)) is nondecreasing, so the condition is monotone in t
/// and the first crossing is located by exponential then binary search.
inline StoppingOutcome rwy_stop(const EigenSystem& eig, const FilterSpec& spec, double sigma, double radius = 1.0) {
  if (!(sigma > 0.0)) throw InputError("noise level sigma must be positive");
  if (!(radius > 0.0)) throw InputError("radius R must be positive");
  const std::int64_t last = integer_horizon(spec.t_max);
  auto fires = [&](std::int64_t t) {
    const double et = spec.eta * static_cast<double>(t);
    return kernel_complexity(eig, 1.0 / std::sqrt(et), 0.0, radius) > 1.0 / (2.0 * std::numbers::e * sigma * et);
  };
  StoppingOutcome out;
  out.rule = StopRule::RWY;
  out.threshold = 1.0 / (2.0 * std::numbers::e * sigma * spec.eta);  // RHS * t
  if (last < 1 || fires(1)) {
    out.t_stop = 0.0;
    out.hit_boundary = true;
    return out;
  }
  std::int64_t lo = 1;  // condition false
  std::int64_t hi = 2;
  while (hi <= last && !fires(hi)) {
    lo = hi;
    hi *= 2;
  }
  if (hi > last) {
    if (!fires(last)) {
      out.t_stop = static_cast<double>(last);
      out.hit_boundary = true;
      return out;
    }
    hi = last;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (fires(mid)) hi = mid;
    else lo = mid;
  }
  out.t_stop = static_cast<double>(hi - 1);
  out.hit_boundary = false;
  return out;
}

// ---------------------------------------------------------------------------
// Split-based rules

/// A filter trained on one subset and evaluated on another. Predictions at
/// iteration t are A * (g_t(mu) .* Z_train) with A = K(test, train) U / n_train.
class SplitEvaluator {
 public:
  SplitEvaluator(const KernelKind& kind, const FilterPolicy& policy, const std::vector<double>& x_train,
                 const std::vector<double>& y_train, const std::vector<double>& x_test,
                 std::vector<double> y_test, double rank_tol = kDefaultRankTol)
      : y_test_(Eigen::Map<const Vector>(y_test.data(), static_cast<Eigen::Index>(y_test.size()))) {
    eig_ = eigensystem(build_gram(kind, x_train), rank_tol);
    spec_ = policy.resolve(eig_);
    const Vector y = Eigen::Map<const Vector>(y_train.data(), static_cast<Eigen::Index>(y_train.size()));
    z_ = eig_.eigenvectors.leftCols(eig_.rank).transpose() * y;
    a_ = cross_kernel(kind, x_test, x_train) * eig_.eigenvectors.leftCols(eig_.rank) /
         static_cast<double>(x_train.size());
  }

  Vector predictions(double t) const {
    Vector c(eig_.rank);
    for (Eigen::Index i = 0; i < eig_.rank; ++i) c(i) = filter_function(spec_, eig_.eigenvalues(i), t) * z_(i);
    return a_ * c;
  }

  /// Mean squared prediction error on the test subset.
  double test_risk(double t) const { return (predictions(t) - y_test_).squaredNorm() / static_cast<double>(y_test_.size()); }

  const FilterSpec& spec() const { return spec_; }
  const EigenSystem& eigen() const { return eig_; }

 private:
  EigenSystem eig_;
  FilterSpec spec_;
  Vector z_;
  Matrix a_;
  Vector y_test_;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

inline void gather(const DesignSample& s, const std::vector<std::size_t>& idx, std::vector<double>& xs,
                   std::vector<double>& ys) {
  xs.clear();
  ys.clear();
  for (auto i : idx) {
    xs.push_back(s.xs[i]);
    ys.push_back(s.ys[i]);
  }
}

}  // namespace detail

/// Random half/half split; first increase of the hold-out risk.
inline StoppingOutcome holdout_stop(const DesignSample& sample, const KernelKind& kind, const FilterPolicy& policy,
                                    std::uint64_t split_seed, double rank_tol = kDefaultRankTol) {
  sample.validate();
  const std::size_t n = sample.size();
  if (n < 4) throw InputError("hold-out needs at least four observations");
  const auto idx = detail::shuffled_indices(n, split_seed);
  const std::size_t n_train = n / 2;
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::vector<double> xtr, ytr, xte, yte;
  detail::gather(sample, train, xtr, ytr);
  detail::gather(sample, test, xte, yte);
  const SplitEvaluator eval(kind, policy, xtr, ytr, xte, yte, rank_tol);

  const auto c = first_increase_time([&](std::int64_t t) { return eval.test_risk(static_cast<double>(t)); },
                                     integer_horizon(eval.spec().t_max));
  StoppingOutcome out;
  out.rule = StopRule::HoldOut;
  out.t_stop = c.t;
  out.hit_boundary = c.boundary;
  out.seed = split_seed;
  return out;
}

/// Cross-validated risk: per-fold test MSE averaged over the V rounds.
class VFoldEvaluator {
 public:
  VFoldEvaluator(const DesignSample& sample, const KernelKind& kind, const FilterPolicy& policy, int folds,
                 std::uint64_t split_seed, double rank_tol = kDefaultRankTol) {
    sample.validate();
    const std::size_t n = sample.size();
    if (folds < 2) throw InputError("V-fold needs at least two folds");
    if (n < 2 * static_cast<std::size_t>(folds)) throw InputError("V-fold needs n >= 2V");
    const auto idx = detail::shuffled_indices(n, split_seed);
    const auto v = static_cast<std::size_t>(folds);
    horizon_ = policy.t_max ? *policy.t_max : std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) {
      const std::size_t begin = j * n / v, end = (j + 1) * n / v;
      std::vector<std::size_t> train, test;
      for (std::size_t k = 0; k < n; ++k) (k >= begin && k < end ? test : train).push_back(idx[k]);
      std::vector<double> xtr, ytr, xte, yte;
      detail::gather(sample, train, xtr, ytr);
      detail::gather(sample, test, xte, yte);
      rounds_.emplace_back(kind, policy, xtr, ytr, xte, yte, rank_tol);
      horizon_ = std::min(horizon_, rounds_.back().spec().t_max);
    }
  }

  double risk(double t) const {
    double acc = 0.0;
    for (const auto& r : rounds_) acc += r.test_risk(t);
    return acc / static_cast<double>(rounds_.size());
  }

  double horizon() const { return horizon_; }
  const std::vector<SplitEvaluator>& rounds() const { return rounds_; }

 private:
  std::vector<SplitEvaluator> rounds_;
  double horizon_ = 0.0;
};

inline StoppingOutcome vfold_stop(const DesignSample& sample, const KernelKind& kind, const FilterPolicy& policy,
                                  int folds, std::uint64_t split_seed, double rank_tol = kDefaultRankTol) {
  const VFoldEvaluator eval(sample, kind, policy, folds, split_seed, rank_tol);
  const auto c = first_increase_time([&](std::int64_t t) { return eval.risk(static_cast<double>(t)); },
                                     integer_horizon(eval.horizon()));
  StoppingOutcome out;
  out.rule = StopRule::VFold;
  out.t_stop = c.t;
  out.hit_boundary = c.boundary;
  out.seed = split_seed;
  return out;
}

}  // namespace earlystop
