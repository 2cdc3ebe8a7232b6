#include <gtest/gtest.h>

#include <random>

#include "earlystop/filters.hpp"
#include "oracles.hpp"

using namespace earlystop;

namespace {

FilterSpec gd(double eta, double t_max = 1e6) { return {FilterFamily::GradientDescent, eta, t_max}; }
FilterSpec krr(double eta, double t_max = 1e6) { return {FilterFamily::KernelRidge, eta, t_max}; }

std::vector<double> grid_x(int n) {
  std::vector<double> xs;
  for (int i = 1; i <= n; ++i) xs.push_back(static_cast<double>(i) / n);
  return xs;
}

struct Instance {
  std::vector<double> xs;
  Matrix kn;
  EigenSystem eig;
  Vector y, f;
  RotatedSample rot;
};

Instance make_instance(const KernelKind& k, int n, double sigma, std::uint64_t seed) {
  Instance in;
  in.xs = grid_x(n);
  in.kn = build_gram(k, in.xs);
  in.eig = eigensystem(in.kn);
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  in.f.resize(n);
  in.y.resize(n);
  for (int i = 0; i < n; ++i) {
    in.f(i) = std::sin(3.0 * in.xs[i]) - 0.4;
    in.y(i) = in.f(i) + sigma * nd(g);
  }
  in.rot = rotate(in.eig, in.y, in.f, sigma * sigma);
  return in;
}

}  // namespace

TEST(Shrinkage, GradientDescentFormula) { EXPECT_DOUBLE_EQ(shrinkage_gamma(gd(0.5), 1.0, 2.0), 0.75); }

TEST(Shrinkage, RidgeFormula) { EXPECT_DOUBLE_EQ(shrinkage_gamma(krr(1.0), 1.0, 1.0), 0.5); }

TEST(Shrinkage, ZeroEigenvalueAndZeroTime) {
  for (double t : {0.0, 0.5, 3.0, 1e9}) {
    EXPECT_EQ(shrinkage_gamma(gd(0.5), 0.0, t), 0.0);
    EXPECT_EQ(shrinkage_gamma(krr(0.5), 0.0, t), 0.0);
  }
  EXPECT_EQ(shrinkage_gamma(gd(0.5), 0.7, 0.0), 0.0);
  EXPECT_EQ(shrinkage_gamma(krr(0.5), 0.7, 0.0), 0.0);
}

TEST(Shrinkage, StepSizeTooLarge) {
  EXPECT_THROW(shrinkage_gamma(gd(1.0), 1.0, 1.0), ConfigError);
  EXPECT_THROW(shrinkage_gamma(gd(0.5), -0.1, 1.0), InputError);
  EXPECT_THROW(shrinkage_gamma(gd(0.5), 0.1, -1.0), InputError);
}

TEST(Shrinkage, FilterBoundsAndMonotonicity) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const double mu = u(g);
    const double eta = (0.01 + 0.98 * u(g)) / std::max(mu, 1e-3);
    const bool ridge = rep % 2 == 1;
    const FilterSpec s = ridge ? krr(eta) : gd(std::min(eta, 0.999 / mu));
    const double t = ridge ? std::exp(12.0 * u(g) - 6.0) : 1.0 + std::floor(std::exp(8.0 * u(g)));
    const double gam = shrinkage_gamma(s, mu, t);
    const double lin = std::min(1.0, s.eta * t * mu);
    EXPECT_LE(gam, lin);
    EXPECT_GE(gam, 0.5 * lin);
    EXPECT_LE(shrinkage_gamma(s, mu, t), shrinkage_gamma(s, mu, t * 1.01));
    EXPECT_GE(gam, 0.0);
    EXPECT_LE(gam, 1.0);
  }
}

TEST(Fit, ZeroTimeGivesZero) {
  auto in = make_instance(SobolevMin{}, 12, 0.1, 1);
  const auto fit = fit_at_time(gd(1.0 / (1.2 * in.eig.top())), in.eig, in.rot, 0.0);
  EXPECT_EQ(fit.f_t.norm(), 0.0);
  EXPECT_EQ(fit.g_t.norm(), 0.0);
}

TEST(Fit, LongRunInterpolates) {
  auto in = make_instance(SobolevMin{}, 10, 0.1, 2);
  const double eta = 1.0 / (1.2 * in.eig.top());
  ASSERT_EQ(in.eig.rank, 10);
  const auto fit = fit_at_time(gd(eta), in.eig, in.rot, 1e6 / eta);
  EXPECT_LE((fit.f_t - in.y).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Fit, MatchesGradientIterations) {
  auto in = make_instance(SobolevMin{}, 3, 0.2, 3);
  const double eta = 1.0 / (1.2 * in.eig.top());
  for (int t : {1, 2, 5, 17, 60}) {
    const auto fit = fit_at_time(gd(eta), in.eig, in.rot, t);
    EXPECT_LE((fit.f_t - oracle::gd_iterates(in.kn, in.y, eta, t)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((fit.f_t - oracle::gd_matrix_power(in.kn, in.y, eta, t)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((in.kn * fit.dual - fit.f_t).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Fit, MatchesRidgeSolve) {
  auto in = make_instance(Gaussian{0.5}, 3, 0.2, 4);
  for (double t : {0.3, 1.0, 7.5, 100.0}) {
    const auto fit = fit_at_time(krr(1.0), in.eig, in.rot, t);
    EXPECT_LE((fit.f_t - oracle::krr_direct(in.kn, in.y, 1.0, t)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Predict, AgreesAtDesignPoints) {
  auto in = make_instance(SobolevMin{}, 25, 0.1, 5);
  const auto s = gd(1.0 / (1.2 * in.eig.top()));
  const auto fit = fit_at_time(s, in.eig, in.rot, 40.0);
  for (std::size_t i = 0; i < in.xs.size(); ++i)
    EXPECT_NEAR(predict(SobolevMin{}, in.xs, fit.dual, in.xs[i]), fit.f_t(static_cast<Eigen::Index>(i)), 1e-8);
  EXPECT_EQ(predict(s, in.eig, in.rot, in.xs, SobolevMin{}, 0.0, 0.33), 0.0);
}

TEST(Predict, LoopOracle) {
  auto in = make_instance(Laplace{0.3}, 4, 0.1, 6);
  const auto fit = fit_at_time(krr(1.0), in.eig, in.rot, 5.0);
  const double x = 0.61;
  double ref = 0.0;
  for (int j = 0; j < 4; ++j) ref += std::exp(-std::abs(x - in.xs[j]) / 0.3) * fit.dual(j);
  EXPECT_NEAR(predict(Laplace{0.3}, in.xs, fit.dual, x), ref / 4.0, 1e-12);
  EXPECT_THROW(predict(SobolevMin{}, in.xs, fit.dual, 1.5), InputError);
}

TEST(Risk, EmpiricalRiskEndpoints) {
  auto in = make_instance(SobolevMin{}, 20, 0.1, 7);
  const double eta = 1.0 / (1.2 * in.eig.top());
  EXPECT_NEAR(empirical_risk_full(in.rot, in.eig, gd(eta), 0.0), in.y.squaredNorm() / 20.0, 1e-14);
  EXPECT_LE(empirical_risk_full(in.rot, in.eig, gd(eta), 1e6 / eta), 1e-6);
  RotatedSample zero{Vector::Zero(20), std::nullopt, std::nullopt};
  EXPECT_EQ(empirical_risk_full(zero, in.eig, gd(eta), 3.0), 0.0);
}

TEST(Risk, ReducedRiskSplit) {
  auto in = make_instance(Polynomial{3}, 30, 0.1, 8);
  const double eta = 1.0 / (1.2 * in.eig.top());
  const double tail = in.rot.z.tail(in.eig.n - in.eig.rank).squaredNorm() / 30.0;
  for (double t : {0.0, 1.0, 10.0, 1e3}) {
    EXPECT_NEAR(smoothed_reduced_risk(in.rot, in.eig, gd(eta), t, 0.0),
                empirical_risk_full(in.rot, in.eig, gd(eta), t) - tail, 1e-12);
  }
}

TEST(Risk, AlphaOneAtZero) {
  auto in = make_instance(SobolevMin{}, 15, 0.1, 9);
  double ref = 0.0;
  for (Eigen::Index i = 0; i < in.eig.rank; ++i) ref += in.eig.eigenvalues(i) * in.rot.z(i) * in.rot.z(i);
  EXPECT_NEAR(smoothed_reduced_risk(in.rot, in.eig, gd(1.0), 0.0, 1.0), ref / 15.0, 1e-14);
  EXPECT_THROW(smoothed_reduced_risk(in.rot, in.eig, gd(1.0), 0.0, 1.5), InputError);
}

TEST(Risk, SingleComponentHandValue) {
  Vector mu(1), z(1);
  mu << 1.0;
  z << 2.0;
  const auto eig = EigenSystem::from_spectrum(mu);
  const RotatedSample rot{z, std::nullopt, std::nullopt};
  EXPECT_DOUBLE_EQ(smoothed_reduced_risk(rot, eig, gd(0.5), 1.0, 0.0), 1.0);
  for (double t : oracle::lin_grid(0.0, 3.0, 301)) {
    const double direct = std::pow(1.0 - (1.0 - std::pow(0.5, t)), 2) * 4.0;
    EXPECT_NEAR(smoothed_reduced_risk(rot, eig, gd(0.5), t, 0.0), direct, 1e-12);
  }
}

TEST(Risk, MonotoneTrajectories) {
  auto in = make_instance(SobolevMin{}, 40, 0.15, 10);
  const double eta = 1.0 / (1.2 * in.eig.top());
  for (const auto& s : {gd(eta), krr(1.0)}) {
    double prev_r = INFINITY, prev_ra = INFINITY, prev_b = INFINITY, prev_v = -1.0;
    for (double t : oracle::log_grid(1e-3, 1e6, 1000)) {
      const double r = empirical_risk_full(in.rot, in.eig, s, t);
      const double ra = smoothed_reduced_risk(in.rot, in.eig, s, t, 0.33);
      const auto d = oracle_decomposition(in.rot, in.eig, s, t, 0.0);
      EXPECT_LE(r, prev_r * (1 + 1e-12));
      EXPECT_LE(ra, prev_ra * (1 + 1e-12));
      EXPECT_LE(d.bias2, prev_b * (1 + 1e-12));
      EXPECT_GE(d.variance, prev_v * (1 - 1e-12));
      EXPECT_EQ(d.risk, d.bias2 + d.variance);
      EXPECT_GE(d.bias2_alpha, 0.0);
      EXPECT_GE(d.variance_alpha, 0.0);
      prev_r = r;
      prev_ra = ra;
      prev_b = d.bias2;
      prev_v = d.variance;
    }
  }
}

TEST(Oracle, InitialValues) {
  auto in = make_instance(SobolevMin{}, 20, 0.1, 11);
  const auto d = oracle_decomposition(in.rot, in.eig, gd(1.0), 0.0, 0.5);
  EXPECT_NEAR(d.bias2, in.f.squaredNorm() / 20.0, 1e-14);
  EXPECT_EQ(d.variance, 0.0);
  RotatedSample zero = in.rot;
  zero.g_star = Vector::Zero(20);
  for (double t : {0.0, 1.0, 100.0}) EXPECT_EQ(oracle_decomposition(zero, in.eig, gd(1.0), t, 0.0).bias2, 0.0);
}

TEST(Oracle, MissingFields) {
  auto in = make_instance(SobolevMin{}, 10, 0.1, 12);
  RotatedSample bare{in.rot.z, std::nullopt, std::nullopt};
  EXPECT_THROW(oracle_decomposition(bare, in.eig, gd(1.0), 1.0, 0.0), StateError);
}

TEST(Oracle, VarianceLimit) {
  auto in = make_instance(Polynomial{3}, 40, 0.15, 13);
  const double eta = 1.0 / (1.2 * in.eig.top());
  const auto d = oracle_decomposition(in.rot, in.eig, gd(eta), 1e6 / eta, 0.0);
  const double limit = in.eig.rank * 0.0225 / 40.0;
  EXPECT_NEAR(d.variance, limit, 1e-6 * limit);
}

TEST(Oracle, NormIdentity) {
  auto in = make_instance(SobolevMin{}, 30, 0.15, 14);
  const auto s = gd(1.0 / (1.2 * in.eig.top()));
  for (double t : {0.5, 3.0, 40.0, 900.0}) {
    const auto fit = fit_at_time(s, in.eig, in.rot, t);
    EXPECT_NEAR(estimation_error(s, in.eig, in.rot, t), (fit.f_t - in.f).squaredNorm() / 30.0, 1e-10);
  }
}

TEST(Oracle, StochasticVarianceOnlyWithNoise) {
  auto in = make_instance(SobolevMin{}, 10, 0.15, 15);
  EXPECT_FALSE(oracle_decomposition(in.rot, in.eig, gd(1.0), 2.0, 0.0).stoch_variance.has_value());
  const Vector eps = in.rot.z - *in.rot.g_star;
  const auto d = oracle_decomposition(in.rot, in.eig, gd(1.0), 2.0, 0.0, eps);
  ASSERT_TRUE(d.stoch_variance.has_value());
  EXPECT_GE(*d.stoch_variance, 0.0);
}

TEST(Oracle, MonteCarloRiskAndExpectedEmpiricalRisk) {
  const int n = 8;
  const double sigma = 0.3;
  auto in = make_instance(SobolevMin{}, n, sigma, 16);
  const auto s = gd(1.0 / (1.2 * in.eig.top()));
  const double t = 4.0;
  const auto d = oracle_decomposition(in.rot, in.eig, s, t, 0.0);
  const double er = expected_empirical_risk(in.rot, in.eig, s, t);
  std::mt19937_64 g(99);
  std::normal_distribution<double> nd;
  std::vector<double> errs, emp;
  for (int rep = 0; rep < 100000; ++rep) {
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = in.f(i) + sigma * nd(g);
    const Vector fit = oracle::gd_iterates(in.kn, y, s.eta, 4);
    errs.push_back((fit - in.f).squaredNorm() / n);
    if (rep < 10000) emp.push_back((fit - y).squaredNorm() / n);
  }
  EXPECT_NEAR(oracle::mean(errs), d.risk, 3.0 * oracle::std_error(errs));
  EXPECT_NEAR(oracle::mean(emp), er, 3.0 * oracle::std_error(emp));
}

TEST(FilterSpecTest, ValidationAndDefaults) {
  Vector mu(2);
  mu << 0.5, 0.1;
  const auto eig = EigenSystem::from_spectrum(mu);
  EXPECT_THROW(gd(2.0).validate(eig), ConfigError);
  EXPECT_NO_THROW(gd(1.9).validate(eig));
  EXPECT_THROW((FilterSpec{FilterFamily::KernelRidge, -1.0, 1.0}.validate(eig)), ConfigError);
  const auto resolved = FilterPolicy{}.resolve(eig);
  EXPECT_DOUBLE_EQ(resolved.eta, 1.0 / 0.6);
  EXPECT_DOUBLE_EQ(resolved.t_max, 1e6 / resolved.eta);
  EXPECT_EQ((FilterPolicy{FilterFamily::KernelRidge, std::nullopt, std::nullopt}.resolve(eig).eta), 1.0);
}
