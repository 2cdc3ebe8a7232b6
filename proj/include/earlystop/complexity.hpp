#pragma once

// Localized empirical kernel complexity, its polynomially smoothed variant,
// the critical-radius fixed point and the smoothed statistical dimension.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "earlystop/errors.hpp"
#include "earlystop/estimators.hpp"
#include "earlystop/kernel.hpp"

namespace earlystop {

/// R * sqrt((1/n) sum_{i<=r} mu_i^alpha min(mu_i, eps^2)). alpha = 0 gives the
/// plain kernel complexity through the same arithmetic (pow(mu, 0) == 1).
inline double kernel_complexity(const EigenSystem& eig, double epsilon, double alpha, double radius) {
  if (!(epsilon > 0.0)) throw InputError("complexity scale epsilon must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("smoothing alpha must lie in [0,1]");
  const double e2 = epsilon * epsilon;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.rank; ++i) {
    const double mu = eig.eigenvalues(i);
    acc += std::pow(mu, alpha) * std::min(mu, e2);
  }
  return radius * std::sqrt(acc / static_cast<double>(eig.n));
}

struct CriticalRadiusOptions {
  double rel_tol = 1e-10;
  int max_iterations = 200;
  double lower = 1e-12;
  double fixed_point_const = 2.0;
};

struct CriticalRadiusResult {
  double alpha = 0.0;
  double epsilon_hat = 0.0;
  double residual = 0.0;
  Eigen::Index d_stat = 0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// sigma * R_hat(eps) / (eps R) - c R eps^(1+alpha); nonincreasing, single sign change.
inline double critical_defect(const EigenSystem& eig, double epsilon, double alpha, double radius,
                              double sigma, double fixed_point_const = 2.0) {
  return sigma * kernel_complexity(eig, epsilon, alpha, radius) / (epsilon * radius) -
         fixed_point_const * radius * std::pow(epsilon, 1.0 + alpha);
}

/// d = min{ j in [r] : mu_j <= eps^2 } (1-based), or r if no such index.
inline Eigen::Index statistical_dimension(const EigenSystem& eig, double epsilon_hat) {
  if (!(epsilon_hat > 0.0)) throw InputError("critical radius must be positive");
  const double e2 = epsilon_hat * epsilon_hat;
  for (Eigen::Index j = 0; j < eig.rank; ++j)
    if (eig.eigenvalues(j) <= e2) return j + 1;
  return eig.rank;
}

/// Smallest eps > 0 with R_hat_alpha(eps)/(eps R) <= (c R / sigma) eps^(1+alpha),
/// found by geometric bisection on (lower, max(1, sqrt(mu_1))].
inline CriticalRadiusResult critical_radius(const EigenSystem& eig, double alpha, double radius,
                                            double sigma, const CriticalRadiusOptions& opt = {}) {
  if (!(sigma > 0.0)) throw InputError("noise level sigma must be positive");
  if (!(radius > 0.0)) throw InputError("radius R must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("smoothing alpha must lie in [0,1]");
  if (eig.rank < 1) throw SolverError("critical radius undefined for a zero spectrum");

  auto h = [&](double e) { return critical_defect(eig, e, alpha, radius, sigma, opt.fixed_point_const); };

  double lo = opt.lower;
  double hi = std::max(1.0, std::sqrt(eig.top()));
  if (h(hi) > 0.0) throw SolverError("fixed-point inequality fails at the upper bracket");
  if (h(lo) <= 0.0) throw SolverError("fixed-point inequality already holds at the lower bracket");

  CriticalRadiusResult res;
  res.alpha = alpha;
  int it = 0;
  while (it < opt.max_iterations && hi - lo > opt.rel_tol * hi) {
    const double mid = (hi / lo > 4.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (h(mid) <= 0.0) hi = mid;
    else lo = mid;
    ++it;
  }
  res.epsilon_hat = hi;
  res.residual = h(hi);
  res.iterations = it;
  res.d_stat = statistical_dimension(eig, hi);
  if (eig.top() > 1.0)
    res.warnings.emplace_back("largest eigenvalue exceeds 1 (kernel not bounded by 1)");
  return res;
}

struct AssumptionAudit {
  double alpha = 0.0;
  double a_const = 0.0;  // tail eigenvalue mass over d * eps^2
  double m_const = 0.0;  // tail over head of mu^(2 alpha)
  std::optional<double> beta_hat;
  CriticalRadiusResult radius;
};

/// Empirical audit of the tail-sum conditions at the smoothed critical radius.
inline AssumptionAudit assumption_audit(const EigenSystem& eig, double alpha, double radius, double sigma,
                                        const CriticalRadiusOptions& opt = {}) {
  AssumptionAudit audit;
  audit.alpha = alpha;
  audit.radius = critical_radius(eig, alpha, radius, sigma, opt);
  const Eigen::Index d = audit.radius.d_stat;
  const double e2 = audit.radius.epsilon_hat * audit.radius.epsilon_hat;
  double tail = 0.0, tail2a = 0.0, head2a = 0.0;
  for (Eigen::Index i = 0; i < eig.rank; ++i) {
    const double mu = eig.eigenvalues(i);
    const double w = std::pow(mu, 2.0 * alpha);
    if (i < d) {
      head2a += w;
    } else {
      tail += mu;
      tail2a += w;
    }
  }
  if (d < eig.rank) {
    audit.a_const = tail / (static_cast<double>(d) * e2);
    audit.m_const = tail2a / head2a;
  }
  try {
    audit.beta_hat = estimate_beta(eig);
  } catch (const StateError&) {
  }
  return audit;
}

}  // namespace earlystop
