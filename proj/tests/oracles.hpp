#pragma once

// Reference computations that share no code with the library.

#include "support.hpp"

#include <cmath>
#include <numbers>

namespace latf::testing {

/// Direct partial sum of sum_n (a)_n / (b)_n z^n / n! in long double.
inline double kummer_partial_sum(double a, double b, double z, int terms = 200) {
  long double term = 1.0L, sum = 1.0L;
  for (int n = 0; n < terms; ++n) {
    term *= (static_cast<long double>(a) + n) / ((static_cast<long double>(b) + n) * (n + 1)) * z;
    sum += term;
  }
  return static_cast<double>(sum);
}

/// Z = integral over the plane of exp(tau |z|) N(z; 0, T I), by nested
/// adaptive Simpson in Cartesian coordinates. The box is split at the origin
/// so the cone point of |z| sits on a panel corner.
inline double tilted_normalizer_2d(double tau, double temperature) {
  const double half = temperature * tau + 14.0 * std::sqrt(temperature);
  // Scaled by the peak value exp(T tau^2 / 2) so absolute tolerances are meaningful.
  const double log_peak = 0.5 * temperature * tau * tau;
  auto density = [&](double x, double y) {
    const double r2 = x * x + y * y;
    return std::exp(tau * std::sqrt(r2) - r2 / (2.0 * temperature) - log_peak) /
           (2.0 * std::numbers::pi * temperature);
  };
  auto inner = [&](double x) {
    auto fy = [&](double y) { return density(x, y); };
    return integrate(fy, -half, 0.0, 1e-11, 30) + integrate(fy, 0.0, half, 1e-11, 30);
  };
  const double scaled = integrate(inner, -half, 0.0, 1e-10, 30) + integrate(inner, 0.0, half, 1e-10, 30);
  return scaled * std::exp(log_peak);
}

}  // namespace latf::testing
