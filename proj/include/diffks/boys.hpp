#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "diffks/error.hpp"

namespace diffks {

// Below this argument F_m(t) comes from the power series at the highest order
// followed by downward recursion; above it from the closed-form F_0 and upward
// recursion, which is stable once t exceeds 2m+1.
inline constexpr double kBoysCrossover = 25.0;

// Fills out[m] = F_m(t) = \int_0^1 u^{2m} exp(-t u^2) du for m = 0 .. out.size()-1.
inline void boys_array(double t, std::span<double> out) {
  if (!(t >= 0.0)) throw InputError("Boys function argument must be >= 0");
  if (out.empty()) return;
  const int mmax = static_cast<int>(out.size()) - 1;
  if (t < kBoysCrossover || (2 * mmax + 1 > t && t < 300.0)) {
    // F_m(t) = e^{-t} sum_k (2t)^k / ((2m+1)(2m+3)...(2m+2k+1))
    double term = 1.0 / (2 * mmax + 1);
    double sum = term;
    for (int k = 1; k < 1000; ++k) {
      term *= 2.0 * t / (2 * mmax + 2 * k + 1);
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    const double et = std::exp(-t);
    out[mmax] = et * sum;
    for (int m = mmax; m > 0; --m) out[m - 1] = (2.0 * t * out[m] + et) / (2 * m - 1);
  } else {
    const double et = std::exp(-t);
    out[0] = 0.5 * std::sqrt(M_PI / t) * std::erf(std::sqrt(t));
    for (int m = 0; m < mmax; ++m) out[m + 1] = ((2 * m + 1) * out[m] - et) / (2.0 * t);
  }
}

inline double boys(int m, double t) {
  if (m < 0) throw InputError("Boys function order must be >= 0");
  double buf[64];
  if (m >= 64) throw InputError("Boys function order too large: " + std::to_string(m));
  boys_array(t, std::span<double>(buf, m + 1));
  return buf[m];
}

}  // namespace diffks
