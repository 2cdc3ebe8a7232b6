#pragma once

// Plug-in estimates of the noise variance, the eigenvalue decay exponent and
// the smoothing level derived from it.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "earlystop/errors.hpp"
#include "earlystop/filters.hpp"
#include "earlystop/kernel.hpp"

namespace earlystop {

enum class NoiseMethod { FiniteRankTail, SmoothedResidual };

inline std::string to_string(NoiseMethod m) {
  return m == NoiseMethod::FiniteRankTail ? "finite_rank" : "smoothed";
}

struct NoiseEstimate {
  double sigma2_hat = 0.0;
  NoiseMethod method = NoiseMethod::FiniteRankTail;
  std::optional<double> t_used;
};

/// Mean of Z_i^2 over the n - r coordinates outside the range of K_n.
inline NoiseEstimate estimate_sigma_finite_rank(const RotatedSample& rot, const EigenSystem& eig) {
  if (eig.rank >= eig.n) throw StateError("finite-rank noise estimate needs rank < n");
  const auto tail = rot.z.tail(eig.n - eig.rank);
  NoiseEstimate est;
  est.sigma2_hat = tail.squaredNorm() / static_cast<double>(eig.n - eig.rank);
  est.method = NoiseMethod::FiniteRankTail;
  return est;
}

/// Horizon used when none is given: 1e4 / eta.
inline double default_noise_horizon(const FilterSpec& spec) { return 1e4 / spec.eta; }

/// R_{1,T} / ((1/n) sum_{i<=r} mu_i (1 - gamma_i^(T))^2).
inline NoiseEstimate estimate_sigma_smoothed(const RotatedSample& rot, const EigenSystem& eig,
                                             const FilterSpec& spec, std::optional<double> horizon = std::nullopt) {
  const double t = horizon ? *horizon : default_noise_horizon(spec);
  if (!(t > 0.0)) throw InputError("noise-estimation horizon must be positive");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < eig.rank; ++i) {
    const double mu = eig.eigenvalues(i);
    const double s = 1.0 - shrinkage_gamma(spec, mu, t);
    const double w = mu * s * s;
    num += w * rot.z(i) * rot.z(i);
    den += w;
  }
  const double inv_n = 1.0 / static_cast<double>(eig.n);
  num *= inv_n;
  den *= inv_n;
  if (!(den > 1e-300)) throw NumericError("smoothed noise estimate: denominator underflow");
  NoiseEstimate est;
  est.sigma2_hat = num / den;
  est.method = NoiseMethod::SmoothedResidual;
  est.t_used = t;
  return est;
}

/// beta_hat = log(mu_1 / mu_2) / log 2.
inline double estimate_beta(const EigenSystem& eig) {
  if (eig.n < 2 || !(eig.eigenvalues(1) > eig.rank_tol * eig.top()))
    throw StateError("spectrum too degenerate to estimate the decay exponent");
  return std::log(eig.eigenvalues(0) / eig.eigenvalues(1)) / std::log(2.0);
}

/// Least-squares slope of log mu_i against log i over i <= max_index
/// (a more robust alternative to the two-eigenvalue ratio).
inline double estimate_beta_loglog(const EigenSystem& eig, Eigen::Index max_index = 20) {
  const Eigen::Index m = std::min(max_index, eig.rank);
  if (m < 2) throw StateError("spectrum too degenerate to estimate the decay exponent");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lx = std::log(static_cast<double>(i + 1));
    const double ly = std::log(eig.eigenvalues(i));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double md = static_cast<double>(m);
  return -(md * sxy - sx * sy) / (md * sxx - sx * sx);
}

struct AlphaChoice {
  double alpha = 0.5;
  bool outside_regime = false;  // beta_hat <= 1: fell back to 0.5
};

/// alpha = 1/(beta_hat + 1), the left end of the admissible interval [1/(b+1), 1/b).
inline AlphaChoice default_alpha(double beta_hat) {
  AlphaChoice c;
  if (!(beta_hat > 1.0)) {
    c.alpha = 0.5;
    c.outside_regime = true;
    return c;
  }
  c.alpha = std::clamp(1.0 / (beta_hat + 1.0), 0.0, 1.0);
  return c;
}

}  // namespace earlystop
