#pragma once

// Kernels on [0,1], the normalized Gram matrix K_n = {K(x_i,x_j)/n}, its
// eigendecomposition with numerical-rank detection, and the rotation of
// responses into the empirical eigenbasis.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "earlystop/errors.hpp"

namespace earlystop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Kernel kinds

/// K(x,y) = min(x,y), the first-order Sobolev kernel on [0,1].
struct SobolevMin {};

/// K(x,y) = (1 + x*y)^degree; rank at most degree + 1.
struct Polynomial {
  int degree = 3;
};

/// K(x,y) = exp(-(x-y)^2 / (2 h^2)).
struct Gaussian {
  double bandwidth = 1.0;
};

/// K(x,y) = exp(-|x-y| / h).
struct Laplace {
  double bandwidth = 1.0;
};

using KernelKind = std::variant<SobolevMin, Polynomial, Gaussian, Laplace>;

inline void validate(const KernelKind& kind) {
  std::visit(
      [](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Polynomial>) {
          if (k.degree < 1) throw InputError("polynomial kernel degree must be >= 1");
        } else if constexpr (std::is_same_v<K, Gaussian> || std::is_same_v<K, Laplace>) {
          if (!(k.bandwidth > 0.0) || !std::isfinite(k.bandwidth))
            throw InputError("kernel bandwidth must be a positive finite number");
        }
      },
      kind);
}

inline std::string kernel_name(const KernelKind& kind) {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SobolevMin>) return "sobolev_min";
        else if constexpr (std::is_same_v<K, Polynomial>) return "polynomial";
        else if constexpr (std::is_same_v<K, Gaussian>) return "gaussian";
        else return "laplace";
      },
      kind);
}

/// Evaluates K(x,y). Every variant is symmetric bit-for-bit in its arguments.
inline double eval_kernel(const KernelKind& kind, double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) throw InputError("kernel inputs must be finite");
  return std::visit(
      [x, y](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SobolevMin>) {
          if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
            throw InputError("Sobolev min kernel is defined on [0,1]");
          return std::min(x, y);
        } else if constexpr (std::is_same_v<K, Polynomial>) {
          if (k.degree < 1) throw InputError("polynomial kernel degree must be >= 1");
          const double base = 1.0 + x * y;
          double v = 1.0;
          for (int i = 0; i < k.degree; ++i) v *= base;
          return v;
        } else if constexpr (std::is_same_v<K, Gaussian>) {
          if (!(k.bandwidth > 0.0)) throw InputError("kernel bandwidth must be positive");
          const double d = x - y;
          return std::exp(-(d * d) / (2.0 * k.bandwidth * k.bandwidth));
        } else {
          if (!(k.bandwidth > 0.0)) throw InputError("kernel bandwidth must be positive");
          return std::exp(-std::abs(x - y) / k.bandwidth);
        }
      },
      kind);
}

// ---------------------------------------------------------------------------
// Data

struct DesignSample {
  std::vector<double> xs;
  std::vector<double> ys;

  std::size_t size() const { return xs.size(); }

  void validate() const {
    if (xs.size() != ys.size()) throw InputError("covariates and responses differ in length");
    if (xs.size() < 2) throw InputError("a design sample needs at least two points");
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
        throw InputError("design sample contains a non-finite value");
  }

  Vector responses() const { return Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size())); }
};

/// Normalized Gram matrix with entries K(x_i, x_j) / n.
inline Matrix build_gram(const KernelKind& kind, const std::vector<double>& xs) {
  validate(kind);
  const auto n = static_cast<Eigen::Index>(xs.size());
  if (n < 2) throw InputError("build_gram needs at least two covariates");
  Matrix k(n, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = eval_kernel(kind, xs[i], xs[j]);
      if (!std::isfinite(v)) throw NumericError("kernel produced a non-finite value");
      k(i, j) = v * inv_n;
      k(j, i) = k(i, j);
    }
  }
  return k;
}

/// Cross-kernel matrix {K(a_i, b_j)} without normalization.
inline Matrix cross_kernel(const KernelKind& kind, const std::vector<double>& a,
                           const std::vector<double>& b) {
  Matrix k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) k(i, j) = eval_kernel(kind, a[i], b[j]);
  return k;
}

// ---------------------------------------------------------------------------
// Eigensystem

inline constexpr double kDefaultRankTol = 1e-10;

struct EigenSystem {
  Vector eigenvalues;   // nonincreasing, clamped at 0
  Matrix eigenvectors;  // columns are the orthonormal eigenvectors
  Eigen::Index rank = 0;
  Eigen::Index n = 0;
  double rank_tol = kDefaultRankTol;
  std::vector<std::string> warnings;

  double top() const { return n > 0 ? eigenvalues(0) : 0.0; }

  /// The r leading eigenvalues, i.e. the nonzero part of the spectrum.
  auto leading() const { return eigenvalues.head(rank); }

  /// Eigensystem with identity eigenvectors, for working directly on spectra.
  static EigenSystem from_spectrum(const Vector& spectrum, double rank_tol = kDefaultRankTol);
};

namespace detail {

inline Eigen::Index numerical_rank(const Vector& mu, double rank_tol) {
  if (mu.size() == 0 || !(mu(0) > 0.0)) return 0;
  const double cut = rank_tol * mu(0);
  Eigen::Index r = 0;
  while (r < mu.size() && mu(r) > cut) ++r;
  return r;
}

inline std::vector<std::string> spectrum_warnings(double most_negative, double top) {
  std::vector<std::string> w;
  if (top > 0.0 && most_negative < -1e-8 * top)
    w.emplace_back("Gram matrix has a negative eigenvalue beyond roundoff; it should be PSD");
  if (top > 1.0)
    w.emplace_back("largest eigenvalue exceeds 1: kernel is not bounded by 1, complexity "
                   "truncation at the top eigenvalue differs from the unit-bounded setting");
  return w;
}

}  // namespace detail

inline EigenSystem EigenSystem::from_spectrum(const Vector& spectrum, double rank_tol) {
  EigenSystem eig;
  const auto n = spectrum.size();
  if (n < 1) throw InputError("spectrum must be nonempty");
  std::vector<double> s(spectrum.data(), spectrum.data() + n);
  std::sort(s.begin(), s.end(), std::greater<>());
  const double most_negative = std::min(0.0, s.back());
  eig.eigenvalues.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) eig.eigenvalues(i) = std::max(0.0, s[i]);
  eig.eigenvectors = Matrix::Identity(n, n);
  eig.n = n;
  eig.rank_tol = rank_tol;
  eig.rank = detail::numerical_rank(eig.eigenvalues, rank_tol);
  eig.warnings = detail::spectrum_warnings(most_negative, eig.top());
  return eig;
}

/// Symmetric eigendecomposition of K_n. Eigenpairs are sorted by decreasing
/// eigenvalue; r counts eigenvalues above rank_tol * mu_1.
inline EigenSystem eigensystem(const Matrix& kn, double rank_tol = kDefaultRankTol) {
  if (kn.rows() != kn.cols() || kn.rows() < 1) throw InputError("Gram matrix must be square");
  if (!kn.allFinite()) throw NumericError("Gram matrix has non-finite entries");
  const double scale = std::max(1.0, kn.cwiseAbs().maxCoeff());
  if ((kn - kn.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputError("Gram matrix is not symmetric");

  const Matrix sym = 0.5 * (kn + kn.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");

  const auto n = sym.rows();
  EigenSystem eig;
  eig.n = n;
  eig.rank_tol = rank_tol;
  eig.eigenvalues.resize(n);
  eig.eigenvectors.resize(n, n);
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < n; ++i) {
    eig.eigenvalues(i) = solver.eigenvalues()(n - 1 - i);
    eig.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  const double most_negative = std::min(0.0, eig.eigenvalues(n - 1));
  eig.eigenvalues = eig.eigenvalues.cwiseMax(0.0);
  eig.rank = detail::numerical_rank(eig.eigenvalues, rank_tol);
  eig.warnings = detail::spectrum_warnings(most_negative, eig.top());
  return eig;
}

/// Eigenvalues only; used where eigenvectors are never needed (critical radii on large n).
inline EigenSystem spectrum_of(const Matrix& kn, double rank_tol = kDefaultRankTol) {
  if (kn.rows() != kn.cols() || kn.rows() < 1) throw InputError("Gram matrix must be square");
  const Matrix sym = 0.5 * (kn + kn.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  EigenSystem eig = EigenSystem::from_spectrum(solver.eigenvalues(), rank_tol);
  eig.eigenvectors.resize(0, 0);
  return eig;
}

// ---------------------------------------------------------------------------
// Rotated model Z = U^T Y, G* = U^T F*

struct RotatedSample {
  Vector z;
  std::optional<Vector> g_star;
  std::optional<double> sigma2;

  bool has_oracle() const { return g_star.has_value() && sigma2.has_value(); }

  const Vector& require_g_star() const {
    if (!g_star) throw StateError("oracle coefficients G* are not available");
    return *g_star;
  }
  double require_sigma2() const {
    if (!sigma2) throw StateError("noise variance is not available");
    return *sigma2;
  }
};

inline RotatedSample rotate(const EigenSystem& eig, const Vector& y,
                            const std::optional<Vector>& f_star = std::nullopt,
                            std::optional<double> sigma2 = std::nullopt) {
  if (eig.eigenvectors.rows() != eig.n) throw StateError("eigensystem carries no eigenvectors");
  if (y.size() != eig.n) throw InputError("response length does not match the eigensystem");
  RotatedSample rot;
  rot.z = eig.eigenvectors.transpose() * y;
  if (f_star) {
    if (f_star->size() != eig.n) throw InputError("truth length does not match the eigensystem");
    rot.g_star = eig.eigenvectors.transpose() * (*f_star);
  }
  if (sigma2) {
    if (!(*sigma2 >= 0.0)) throw InputError("noise variance must be nonnegative");
    rot.sigma2 = sigma2;
  }
  return rot;
}

}  // namespace earlystop
