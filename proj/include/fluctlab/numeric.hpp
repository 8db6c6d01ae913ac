#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace fluctlab {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

// Reduce an angle into [0, 2pi).
inline double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a tiny negative number can round up to exactly 2pi
  if (r >= kTwoPi) r = 0.0;
  return r;
}

// 64-point Gauss-Legendre rule on [a, b].
template <class F>
double gauss_legendre_64(F&& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 64>::integrate(std::forward<F>(f), a, b);
}

// Adaptive Gauss-Kronrod (15 point) on [a, b].
template <class F>
double adaptive_integral(F&& f, double a, double b, double tol = 1e-13, double* error = nullptr) {
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      std::forward<F>(f), a, b, /*max_depth=*/15, tol, error);
}

// Double-exponential rule on [a, b]; tolerant of weak endpoint singularities.
// The integrator caches abscissas and is not safe to share across threads.
template <class F>
double endpoint_integral(F&& f, double a, double b, double tol = 1e-14) {
  thread_local boost::math::quadrature::tanh_sinh<double> rule;
  return rule.integrate(std::forward<F>(f), a, b, tol);
}

}  // namespace fluctlab
