#pragma once

// Closed-form baseline functionals as energy densities per unit volume,
// templated on the scalar so dual numbers give potentials and kernels.
// Spin-resolved arguments: densities n_up, n_dn and gradient contractions
// sigma_uu = |grad n_up|^2, sigma_ud = grad n_up . grad n_dn, sigma_dd.

#include <cmath>

#include "diffks/autodiff.hpp"

namespace diffks::xc {

using ad::primal;

// (3/4)(3/pi)^{1/3}
inline const double kSlaterCx = 0.75 * std::cbrt(3.0 / M_PI);

// Slater exchange, spin-scaled: e = -Cx 2^{1/3} (n_up^{4/3} + n_dn^{4/3}).
template <class T>
T slater_exchange(const T &n_up, const T &n_dn) {
  using std::pow;
  static const double c = kSlaterCx * std::cbrt(2.0);
  T e(0.0);
  if (primal(n_up) > 0.0) e = e - c * pow(n_up, 4.0 / 3.0);
  if (primal(n_dn) > 0.0) e = e - c * pow(n_dn, 4.0 / 3.0);
  return e;
}

// Perdew-Wang 1992 parameter sets. `original` matches the published values
// with f''(0) = 1.709921; `modified` carries the extra digits used inside PBE.
struct PW92Params {
  double A[3], alpha1[3], beta1[3], beta2[3], beta3[3], beta4[3];
  double fz20;
};

inline constexpr PW92Params kPW92Original = {
    {0.031091, 0.015545, 0.016887}, {0.21370, 0.20548, 0.11125},
    {7.5957, 14.1189, 10.357},      {3.5876, 6.1977, 3.6231},
    {1.6382, 3.3662, 0.88026},      {0.49294, 0.62517, 0.49671},
    1.709921};

inline constexpr PW92Params kPW92Modified = {
    {0.0310907, 0.01554535, 0.0168869}, {0.21370, 0.20548, 0.11125},
    {7.5957, 14.1189, 10.357},          {3.5876, 6.1977, 3.6231},
    {1.6382, 3.3662, 0.88026},          {0.49294, 0.62517, 0.49671},
    1.709920934161365617563962776245};

namespace detail {

template <class T>
T pw92_g(int k, const T &rs, const T &sqrt_rs, const PW92Params &p) {
  using std::log;
  const T den = 2.0 * p.A[k] *
                (p.beta1[k] * sqrt_rs + p.beta2[k] * rs + p.beta3[k] * rs * sqrt_rs +
                 p.beta4[k] * rs * rs);
  return -2.0 * p.A[k] * (1.0 + p.alpha1[k] * rs) * log(1.0 + 1.0 / den);
}

// f(zeta) numerator pieces from the spin densities: (1+z) = 2 n_up / n.
template <class T>
T spin_interp_f(const T &one_plus, const T &one_minus) {
  using std::pow;
  static const double denom = 2.0 * std::cbrt(2.0) - 2.0;
  return (pow(one_plus, 4.0 / 3.0) + pow(one_minus, 4.0 / 3.0) - 2.0) / denom;
}

}  // namespace detail

// Correlation energy per particle eps_c(n_up, n_dn); zero density gives zero.
template <class T>
T pw92_eps(const T &n_up, const T &n_dn, const PW92Params &p = kPW92Original) {
  using std::cbrt;
  using std::sqrt;
  const T n = n_up + n_dn;
  if (!(primal(n) > 0.0)) return T(0.0);
  const T rs = cbrt(3.0 / (4.0 * M_PI * n));
  const T sqrt_rs = sqrt(rs);
  const T one_plus = 2.0 * n_up / n;
  const T one_minus = 2.0 * n_dn / n;
  const T zeta = (n_up - n_dn) / n;
  const T z2 = zeta * zeta;
  const T z4 = z2 * z2;
  const T fz = detail::spin_interp_f(one_plus, one_minus);
  const T ec0 = detail::pw92_g(0, rs, sqrt_rs, p);
  const T ec1 = detail::pw92_g(1, rs, sqrt_rs, p);
  const T ac = -detail::pw92_g(2, rs, sqrt_rs, p);
  return ec0 + ac * fz / p.fz20 * (1.0 - z4) + (ec1 - ec0) * fz * z4;
}

template <class T>
T pw92_correlation(const T &n_up, const T &n_dn, const PW92Params &p = kPW92Original) {
  return (n_up + n_dn) * pw92_eps(n_up, n_dn, p);
}

// Slater exchange + PW92 correlation.
template <class T>
T lda_xc(const T &n_up, const T &n_dn) {
  return slater_exchange(n_up, n_dn) + pw92_correlation(n_up, n_dn);
}

inline constexpr double kPbeKappa = 0.804;
inline constexpr double kPbeMu = 0.2195149727645171;
inline constexpr double kPbeBeta = 0.06672455060314922;
inline const double kPbeGamma = (1.0 - std::log(2.0)) / (M_PI * M_PI);

// Unpolarized PBE exchange energy density for density n and sigma = |grad n|^2.
template <class T>
T pbe_exchange_unpolarized(const T &n, const T &sigma) {
  using std::cbrt;
  using std::pow;
  if (!(primal(n) > 0.0)) return T(0.0);
  static const double c = 4.0 * std::pow(3.0 * M_PI * M_PI, 2.0 / 3.0);
  const T n43 = pow(n, 4.0 / 3.0);
  const T s2 = sigma / (c * n43 * n43);  // s^2 = sigma / (4 kF^2 n^2)
  const T fx = 1.0 + kPbeKappa - kPbeKappa / (1.0 + kPbeMu * s2 / kPbeKappa);
  return -kSlaterCx * n43 * fx;
}

// Spin-scaled PBE exchange.
template <class T>
T pbe_exchange(const T &n_up, const T &n_dn, const T &s_uu, const T &s_dd) {
  return 0.5 * (pbe_exchange_unpolarized(T(2.0 * n_up), T(4.0 * s_uu)) +
                pbe_exchange_unpolarized(T(2.0 * n_dn), T(4.0 * s_dd)));
}

// PBE correlation: PW92 (modified parameters) plus the gradient correction H.
template <class T>
T pbe_correlation(const T &n_up, const T &n_dn, const T &s_uu, const T &s_ud, const T &s_dd) {
  using std::cbrt;
  using std::exp;
  using std::log;
  using std::pow;
  const T n = n_up + n_dn;
  if (!(primal(n) > 0.0)) return T(0.0);
  const T eps = pw92_eps(n_up, n_dn, kPW92Modified);
  const T one_plus = 2.0 * n_up / n;
  const T one_minus = 2.0 * n_dn / n;
  const T phi = 0.5 * (pow(one_plus, 2.0 / 3.0) + pow(one_minus, 2.0 / 3.0));
  const T phi3 = phi * phi * phi;
  const T sigma = s_uu + 2.0 * s_ud + s_dd;
  // t^2 = sigma / (4 phi^2 ks^2 n^2), ks^2 = 4 kF / pi, kF = (3 pi^2 n)^{1/3}
  const T kf = cbrt(3.0 * M_PI * M_PI * n);
  const T ks2 = 4.0 * kf / M_PI;
  const T t2 = sigma / (4.0 * phi * phi * ks2 * n * n);
  const T A = (kPbeBeta / kPbeGamma) / (exp(-eps / (kPbeGamma * phi3)) - 1.0);
  const T at2 = A * t2;
  const T H = kPbeGamma * phi3 *
              log(1.0 + (kPbeBeta / kPbeGamma) * t2 * (1.0 + at2) / (1.0 + at2 + at2 * at2));
  return n * (eps + H);
}

template <class T>
T pbe_xc(const T &n_up, const T &n_dn, const T &s_uu, const T &s_ud, const T &s_dd) {
  return pbe_exchange(n_up, n_dn, s_uu, s_dd) + pbe_correlation(n_up, n_dn, s_uu, s_ud, s_dd);
}

}  // namespace diffks::xc
