#pragma once

#include <cmath>

#include "skillrl/common.hpp"

namespace skillrl {

/* Digamma via upward recurrence to x >= 6 followed by the asymptotic
 * Bernoulli series.  Absolute error < 1e-12 on (0, inf).  Log-gamma comes
 * from std::lgamma. */
inline double digamma(double x) {
  if (!(x > 0.0)) throw NumericError("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return acc + std::log(x) - 0.5 * inv - series;
}

// log of the multivariate gamma function Gamma_D(a)
inline double lmvgamma(int D, double a) {
  double s = 0.25 * D * (D - 1) * std::log(M_PI);
  for (int j = 1; j <= D; ++j) s += std::lgamma(a + 0.5 * (1 - j));
  return s;
}

// multivariate digamma: d/da log Gamma_D(a)
inline double mvdigamma(int D, double a) {
  double s = 0.0;
  for (int j = 1; j <= D; ++j) s += digamma(a + 0.5 * (1 - j));
  return s;
}

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace skillrl
