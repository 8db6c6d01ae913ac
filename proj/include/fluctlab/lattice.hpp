#pragma once

// Periodic lattice geometry and the singular power-law weight
//
//   Psi(x, y) = d(x, y)^(-alpha),   d = distance on the unit circle R/Z,
//
// together with the closed-form Riemann-sum asymptotics of Psi and the
// limiting constant chi(alpha) of the rescaled Riemann-sum residual.
//
// Sites are i in {-N, ..., N-1} (N = n_half, -N identified with N) at
// positions x_i = i / (2N); site i is stored at array index i + N. The
// kernel is indexed by lattice offset: kernel[k] = Psi(0, k / (2N)), with
// kernel[0] = 0 (no self-interaction).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "fluctlab/error.hpp"
#include "fluctlab/numeric.hpp"

namespace fluctlab {

inline double circle_distance(double x, double y) {
  // |x - y| first, so the result is bit-symmetric in (x, y)
  const double diff = std::fmod(std::abs(x - y), 1.0);
  return std::min(diff, 1.0 - diff);
}

inline double psi(double x, double y, double alpha) {
  const double d = circle_distance(x, y);
  if (d == 0.0) return 0.0;
  if (alpha == 0.0) return 1.0;
  return std::pow(d, -alpha);
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in [0, 1), got " + std::to_string(alpha));
  }
}

class Lattice {
 public:
  Lattice(std::int64_t n_half, double alpha) : n_half_(n_half), alpha_(alpha) {
    if (n_half < 1) throw ConfigError("n_half must be >= 1");
    check_alpha(alpha);
    const std::size_t size = static_cast<std::size_t>(2 * n_half);
    positions_.resize(size);
    kernel_.resize(size);
    const double inv = 1.0 / static_cast<double>(size);
    for (std::size_t k = 0; k < size; ++k) {
      positions_[k] = (static_cast<double>(k) - static_cast<double>(n_half)) * inv;
      if (k == 0) {
        kernel_[k] = 0.0;
        continue;
      }
      // integer distance keeps kernel[k] == kernel[size - k] bit-exact
      const std::size_t steps = std::min(k, size - k);
      kernel_[k] = alpha == 0.0 ? 1.0 : std::pow(static_cast<double>(steps) * inv, -alpha);
    }
  }

  [[nodiscard]] std::int64_t n_half() const { return n_half_; }
  [[nodiscard]] std::size_t size() const { return kernel_.size(); }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] const std::vector<double>& positions() const { return positions_; }
  [[nodiscard]] const std::vector<double>& kernel() const { return kernel_; }

  // Psi(x_i, x_j) by array index.
  [[nodiscard]] double weight(std::size_t i, std::size_t j) const {
    const std::size_t k = i >= j ? i - j : j - i;
    return kernel_[k];
  }

 private:
  std::int64_t n_half_;
  double alpha_;
  std::vector<double> positions_;
  std::vector<double> kernel_;
};

inline Lattice build_lattice(std::int64_t n_half, double alpha) { return Lattice(n_half, alpha); }

// Renormalisation a_N: sqrt(N) for alpha < 1/2, N^(1 - alpha) for alpha > 1/2.
// The critical point alpha = 1/2 uses sqrt(N); callers flag it via is_critical().
inline double scale_factor(std::int64_t n_half, double alpha) {
  const auto n = static_cast<double>(n_half);
  return alpha > 0.5 ? std::pow(n, 1.0 - alpha) : std::sqrt(n);
}

inline bool is_critical(double alpha) { return alpha == 0.5; }

// sum_{k=1}^{n} k^(-alpha), compensated; summed from the small end.
inline double power_sum(std::int64_t n, double alpha) {
  if (alpha == 0.0) return static_cast<double>(n);
  CompensatedSum acc;
  for (std::int64_t k = n; k >= 1; --k) acc.add(std::pow(static_cast<double>(k), -alpha));
  return acc.value();
}

// int_S Psi(x, y) dy, the same for every x.
inline double integral_psi(double alpha) {
  check_alpha(alpha);
  return std::pow(2.0, alpha) / (1.0 - alpha);
}

// (1/|Lambda_N|) sum_j Psi(x_i, x_j) via the closed form
// 2^alpha N^(alpha-1) sum_{k<=N} k^-alpha - 2^(alpha-1) / N.
inline double mean_weight(std::int64_t n_half, double alpha) {
  check_alpha(alpha);
  const auto n = static_cast<double>(n_half);
  const double two_a = std::pow(2.0, alpha);
  return two_a * std::pow(n, alpha - 1.0) * power_sum(n_half, alpha) - 0.5 * two_a / n;
}

inline double mean_weight(const Lattice& lattice) { return mean_weight(lattice.n_half(), lattice.alpha()); }

// N^(1-alpha) * (mean_weight - integral_psi), rearranged so that the large
// leading terms cancel before multiplication.
inline double riemann_residual(std::int64_t n_half, double alpha) {
  check_alpha(alpha);
  if (n_half < 1) throw ConfigError("n_half must be >= 1");
  if (alpha == 0.0) return -0.5;
  const auto n = static_cast<double>(n_half);
  const double two_a = std::pow(2.0, alpha);
  const double leading = std::pow(n, 1.0 - alpha) / (1.0 - alpha);
  return two_a * (power_sum(n_half, alpha) - leading) - 0.5 * two_a * std::pow(n, -alpha);
}

inline double riemann_residual(const Lattice& lattice) {
  return riemann_residual(lattice.n_half(), lattice.alpha());
}

struct ChiResult {
  double value = 0.0;
  std::int64_t terms = 0;      // truncation K of the k-series
  double error_bound = 0.0;    // certified bound on the truncation error of chi
};

// chi(alpha) = 2^alpha * C(alpha) with
//   C(alpha) = -1/(1-alpha) + 1/2 - int_0^1 (u - 1/2) sum_{k>=1} alpha (u+k)^(-alpha-1) du.
//
// Each k-term is the trapezoid error of x^-alpha on [k, k+1], bounded by
// alpha(alpha+1)/12 k^(-alpha-2); the tail beyond K is therefore at most
// alpha/12 K^(-alpha-1). K is the smallest count meeting half the tolerance,
// capped at 1e7. The u-integral uses 64-point Gauss-Legendre.
inline ChiResult chi_alpha_detailed(double alpha, double tolerance) {
  check_alpha(alpha);
  if (!(tolerance > 0.0)) throw ConfigError("chi tolerance must be > 0");
  if (alpha == 0.0) return {-0.5, 0, 0.0};

  constexpr std::int64_t kMaxTerms = 10'000'000;
  const double two_a = std::pow(2.0, alpha);
  auto tail_bound = [&](double k) { return two_a * alpha / 12.0 * std::pow(k, -alpha - 1.0); };

  double wanted = std::pow(alpha * two_a / (12.0 * 0.5 * tolerance), 1.0 / (1.0 + alpha));
  auto terms = static_cast<std::int64_t>(std::ceil(std::max(16.0, wanted)));
  terms = std::min(terms, kMaxTerms);
  const double bound = tail_bound(static_cast<double>(terms));
  if (bound > tolerance) {
    throw NumericError("chi_alpha: truncation bound " + std::to_string(bound) +
                       " exceeds tolerance at the term cap");
  }

  auto series = [&](double u) {
    double s = 0.0;
    for (std::int64_t k = terms; k >= 1; --k) s += std::pow(u + static_cast<double>(k), -alpha - 1.0);
    return alpha * s;
  };
  const double integral = gauss_legendre_64([&](double u) { return (u - 0.5) * series(u); }, 0.0, 1.0);
  const double c_alpha = -1.0 / (1.0 - alpha) + 0.5 - integral;
  return {two_a * c_alpha, terms, bound};
}

inline double chi_alpha(double alpha, double tolerance) { return chi_alpha_detailed(alpha, tolerance).value; }

// sum_{j != i} d(x_j, x_i)^(-beta) on Lambda_N; grows like N, N ln N or N^beta.
inline double weight_sum_growth(std::int64_t n_half, double beta) {
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (n_half < 1) throw ConfigError("n_half must be >= 1");
  const auto size = static_cast<double>(2 * n_half);
  CompensatedSum acc;
  for (std::int64_t k = n_half - 1; k >= 1; --k) acc.add(2.0 * std::pow(size / static_cast<double>(k), beta));
  acc.add(std::pow(2.0, beta));  // antipode, distance 1/2
  return acc.value();
}

// int_S Psi(x0, y) h(y) dy for a smooth h. The substitution
// |z| = s^(1/(1-alpha)) removes the integrable singularity at z = 0; what
// remains is a fractional power of s at the endpoint.
template <class F>
double psi_weighted_integral(double alpha, double x0, F&& h, double tol = 1e-14) {
  check_alpha(alpha);
  const double p = 1.0 / (1.0 - alpha);
  const double upper = std::pow(0.5, 1.0 - alpha);
  auto integrand = [&](double s) {
    const double z = std::pow(s, p);
    return h(x0 + z) + h(x0 - z);
  };
  return p * endpoint_integral(integrand, 0.0, upper, tol);
}

// rho_hat(l) = int_S d(0, z)^(-alpha) cos(2 pi l z) dz, cached per (alpha, l).
// For Fourier modes: int_S Psi(x, y) cos(2 pi l y) dy = rho_hat(l) cos(2 pi l x),
// and likewise for sin.
inline double psi_fourier(double alpha, int ell) {
  check_alpha(alpha);
  ell = std::abs(ell);
  if (ell == 0) return integral_psi(alpha);
  static std::mutex mutex;
  static std::map<std::pair<double, int>, double> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find({alpha, ell}); it != cache.end()) return it->second;
  }
  // Split at the zeros of the cosine in s-space so each panel is smooth.
  const double p = 1.0 / (1.0 - alpha);
  double total = 0.0;
  const int panels = 2 * ell;
  for (int m = 0; m < panels; ++m) {
    const double z_lo = 0.5 * m / panels;
    const double z_hi = 0.5 * (m + 1) / panels;
    const double s_lo = std::pow(z_lo, 1.0 - alpha);
    const double s_hi = std::pow(z_hi, 1.0 - alpha);
    total += adaptive_integral(
        [&](double s) { return std::cos(kTwoPi * ell * std::pow(s, p)); }, s_lo, s_hi, 1e-13);
  }
  const double value = 2.0 * p * total;
  std::lock_guard lock(mutex);
  cache[{alpha, ell}] = value;
  return value;
}

}  // namespace fluctlab
