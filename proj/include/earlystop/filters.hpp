#pragma once

// Shrinkage trajectories for kernel gradient descent and kernel ridge
// regression in the empirical eigenbasis, together with the estimators,
// empirical risks and bias/variance decompositions they induce.
//
// Only the r leading eigendirections carry a nonzero shrinkage factor; every
// sum below runs over i < rank.

#include <cmath>
#include <optional>
#include <string>

#include "earlystop/errors.hpp"
#include "earlystop/kernel.hpp"

namespace earlystop {

enum class FilterFamily { GradientDescent, KernelRidge };

inline std::string to_string(FilterFamily f) {
  return f == FilterFamily::GradientDescent ? "gd" : "krr";
}

struct FilterSpec {
  FilterFamily family = FilterFamily::GradientDescent;
  double eta = 1.0;
  double t_max = 1e6;

  /// GD needs eta * mu_1 < 1.
  void validate(const EigenSystem& eig) const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("step size eta must be positive");
    if (!(t_max > 0.0)) throw ConfigError("t_max must be positive");
    if (family == FilterFamily::GradientDescent && !(eta * eig.top() < 1.0))
      throw ConfigError("gradient descent requires eta * mu_1 < 1");
  }
};

/// Default calibration: eta = 1/(1.2 mu_1) for GD, eta = 1 for KRR.
inline double default_eta(FilterFamily family, const EigenSystem& eig) {
  if (family == FilterFamily::KernelRidge) return 1.0;
  if (!(eig.top() > 0.0)) throw ConfigError("cannot calibrate a step size on a zero spectrum");
  return 1.0 / (1.2 * eig.top());
}

inline double default_t_max(double eta) { return 1e6 / eta; }

/// A filter whose eta and horizon may be left to the per-dataset defaults.
struct FilterPolicy {
  FilterFamily family = FilterFamily::GradientDescent;
  std::optional<double> eta;
  std::optional<double> t_max;

  FilterSpec resolve(const EigenSystem& eig) const {
    FilterSpec spec;
    spec.family = family;
    spec.eta = eta ? *eta : default_eta(family, eig);
    spec.t_max = t_max ? *t_max : default_t_max(spec.eta);
    spec.validate(eig);
    return spec;
  }
};

// ---------------------------------------------------------------------------
// Shrinkage

/// gamma^(t)(mu): fraction of the mu-direction fitted at time t (continuous).
inline double shrinkage_gamma(const FilterSpec& spec, double mu, double t) {
  if (!(mu >= 0.0)) throw InputError("eigenvalue must be nonnegative");
  if (!(t >= 0.0)) throw InputError("time must be nonnegative");
  if (spec.family == FilterFamily::GradientDescent) {
    const double x = spec.eta * mu;
    if (!(x < 1.0)) throw ConfigError("gradient descent requires eta * mu < 1");
    if (mu == 0.0 || t == 0.0) return 0.0;
    // 1 - (1 - x)^t without cancellation for small x.
    return -std::expm1(t * std::log1p(-x));
  }
  if (mu == 0.0 || t == 0.0) return 0.0;
  const double a = spec.eta * t * mu;  // mu / (mu + lambda_t), lambda_t = 1/(eta t)
  if (std::isinf(a)) return 1.0;
  return a / (1.0 + a);
}

/// Filter function g_t(mu) = gamma/mu with the convention g_t(0) = 0.
inline double filter_function(const FilterSpec& spec, double mu, double t) {
  if (mu == 0.0) return 0.0;
  if (spec.family == FilterFamily::KernelRidge) {
    return spec.eta * t / (1.0 + spec.eta * t * mu);
  }
  return shrinkage_gamma(spec, mu, t) / mu;
}

/// gamma^(t) for every eigendirection; zero beyond the rank.
inline Vector shrinkage_vector(const FilterSpec& spec, const EigenSystem& eig, double t) {
  Vector g = Vector::Zero(eig.n);
  for (Eigen::Index i = 0; i < eig.rank; ++i) g(i) = shrinkage_gamma(spec, eig.eigenvalues(i), t);
  return g;
}

// ---------------------------------------------------------------------------
// Estimators

struct FitResult {
  Vector g_t;   // coordinates of F_t in the eigenbasis
  Vector f_t;   // fitted values at the design points
  Vector dual;  // F_t = K_n * dual
};

inline FitResult fit_at_time(const FilterSpec& spec, const EigenSystem& eig,
                             const RotatedSample& rot, double t) {
  if (rot.z.size() != eig.n) throw InputError("rotated sample does not match the eigensystem");
  if (eig.eigenvectors.rows() != eig.n) throw StateError("eigensystem carries no eigenvectors");
  FitResult fit;
  fit.g_t = Vector::Zero(eig.n);
  Vector scaled = Vector::Zero(eig.n);
  for (Eigen::Index i = 0; i < eig.rank; ++i) {
    const double mu = eig.eigenvalues(i);
    fit.g_t(i) = shrinkage_gamma(spec, mu, t) * rot.z(i);
    scaled(i) = filter_function(spec, mu, t) * rot.z(i);
  }
  fit.f_t = eig.eigenvectors * fit.g_t;
  fit.dual = eig.eigenvectors * scaled;
  return fit;
}

/// Off-sample prediction f^t(x) = (1/n) sum_j dual_j K(x, x_j).
inline double predict(const KernelKind& kind, const std::vector<double>& xs_train,
                      const Vector& dual, double x_new) {
  if (dual.size() != static_cast<Eigen::Index>(xs_train.size()))
    throw InputError("dual coefficients do not match the training covariates");
  double acc = 0.0;
  for (std::size_t j = 0; j < xs_train.size(); ++j)
    acc += dual(static_cast<Eigen::Index>(j)) * eval_kernel(kind, x_new, xs_train[j]);
  return acc / static_cast<double>(xs_train.size());
}

inline double predict(const FilterSpec& spec, const EigenSystem& eig, const RotatedSample& rot,
                      const std::vector<double>& xs_train, const KernelKind& kind, double t,
                      double x_new) {
  return predict(kind, xs_train, fit_at_time(spec, eig, rot, t).dual, x_new);
}

/// ||f^t - f*||_n^2 computed in eigen-coordinates.
inline double estimation_error(const FilterSpec& spec, const EigenSystem& eig,
                               const RotatedSample& rot, double t) {
  const Vector& g_star = rot.require_g_star();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.n; ++i) {
    const double gamma = i < eig.rank ? shrinkage_gamma(spec, eig.eigenvalues(i), t) : 0.0;
    const double d = gamma * rot.z(i) - g_star(i);
    acc += d * d;
  }
  return acc / static_cast<double>(eig.n);
}

// ---------------------------------------------------------------------------
// Empirical risks

/// R_t = (1/n) sum_i (1 - gamma_i)^2 Z_i^2 over all n coordinates.
inline double empirical_risk_full(const RotatedSample& rot, const EigenSystem& eig,
                                  const FilterSpec& spec, double t) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.n; ++i) {
    const double gamma = i < eig.rank ? shrinkage_gamma(spec, eig.eigenvalues(i), t) : 0.0;
    const double s = 1.0 - gamma;
    acc += s * s * rot.z(i) * rot.z(i);
  }
  return acc / static_cast<double>(eig.n);
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("smoothing alpha must lie in [0,1]");
}

/// R_{alpha,t} = (1/n) sum_{i<=r} mu_i^alpha (1 - gamma_i)^2 Z_i^2; alpha = 0 is
/// the reduced empirical risk.
inline double smoothed_reduced_risk(const RotatedSample& rot, const EigenSystem& eig,
                                    const FilterSpec& spec, double t, double alpha) {
  check_alpha(alpha);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.rank; ++i) {
    const double mu = eig.eigenvalues(i);
    const double s = 1.0 - shrinkage_gamma(spec, mu, t);
    acc += std::pow(mu, alpha) * s * s * rot.z(i) * rot.z(i);
  }
  return acc / static_cast<double>(eig.n);
}

/// sigma^2 tr(K_n^alpha) / n restricted to the nonzero spectrum.
inline double discrepancy_threshold(const EigenSystem& eig, double alpha, double sigma2) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.rank; ++i) acc += std::pow(eig.eigenvalues(i), alpha);
  return sigma2 * acc / static_cast<double>(eig.n);
}

// ---------------------------------------------------------------------------
// Oracle quantities

struct OracleDecomposition {
  double t = 0.0;
  double bias2 = 0.0;
  double variance = 0.0;
  double bias2_alpha = 0.0;
  double variance_alpha = 0.0;
  std::optional<double> stoch_variance;
  double risk = 0.0;
};

inline OracleDecomposition oracle_decomposition(const RotatedSample& rot, const EigenSystem& eig,
                                                const FilterSpec& spec, double t, double alpha,
                                                const std::optional<Vector>& rotated_noise = std::nullopt) {
  check_alpha(alpha);
  const Vector& g_star = rot.require_g_star();
  const double sigma2 = rot.require_sigma2();
  if (rotated_noise && rotated_noise->size() != eig.n)
    throw InputError("noise vector does not match the eigensystem");

  OracleDecomposition d;
  d.t = t;
  double bias = 0.0, var = 0.0, bias_a = 0.0, var_a = 0.0, stoch = 0.0;
  for (Eigen::Index i = 0; i < eig.n; ++i) {
    const bool active = i < eig.rank;
    const double mu = eig.eigenvalues(i);
    const double gamma = active ? shrinkage_gamma(spec, mu, t) : 0.0;
    const double s2 = (1.0 - gamma) * (1.0 - gamma);
    const double g2 = g_star(i) * g_star(i);
    bias += s2 * g2;
    var += gamma * gamma;
    if (active) {
      const double w = std::pow(mu, alpha);
      bias_a += w * s2 * g2;
      var_a += w * gamma * gamma;
    }
    if (rotated_noise) stoch += gamma * gamma * (*rotated_noise)(i) * (*rotated_noise)(i);
  }
  const double inv_n = 1.0 / static_cast<double>(eig.n);
  d.bias2 = bias * inv_n;
  d.variance = sigma2 * var * inv_n;
  d.bias2_alpha = bias_a * inv_n;
  d.variance_alpha = sigma2 * var_a * inv_n;
  if (rotated_noise) d.stoch_variance = stoch * inv_n;
  d.risk = d.bias2 + d.variance;
  return d;
}

/// E_eps R_{alpha,t} = B^2_alpha(t) + (sigma^2/n) sum_{i<=r} mu_i^alpha (1 - gamma_i)^2.
inline double expected_smoothed_risk(const RotatedSample& rot, const EigenSystem& eig,
                                     const FilterSpec& spec, double t, double alpha) {
  check_alpha(alpha);
  const Vector& g_star = rot.require_g_star();
  const double sigma2 = rot.require_sigma2();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.rank; ++i) {
    const double mu = eig.eigenvalues(i);
    const double s = 1.0 - shrinkage_gamma(spec, mu, t);
    acc += std::pow(mu, alpha) * s * s * (g_star(i) * g_star(i) + sigma2);
  }
  return acc / static_cast<double>(eig.n);
}

/// Expected full empirical risk, including the n - r pure-noise tail.
inline double expected_empirical_risk(const RotatedSample& rot, const EigenSystem& eig,
                                      const FilterSpec& spec, double t) {
  const Vector& g_star = rot.require_g_star();
  const double sigma2 = rot.require_sigma2();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.n; ++i) {
    const double gamma = i < eig.rank ? shrinkage_gamma(spec, eig.eigenvalues(i), t) : 0.0;
    const double s2 = (1.0 - gamma) * (1.0 - gamma);
    acc += s2 * (g_star(i) * g_star(i) + sigma2);
  }
  return acc / static_cast<double>(eig.n);
}

}  // namespace earlystop
