#pragma once

// Forward-mode dual numbers. Nesting (Dual<Dual<double,1>,N>) gives directional
// second derivatives, which the SCF response code uses for XC kernels.

#include <array>
#include <cmath>
#include <type_traits>

namespace diffks::ad {

template <class T, int N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() = default;
  Dual(double x) : v(x) {}  // NOLINT: implicit lift from constants
  template <class U = T, std::enable_if_t<!std::is_same_v<U, double>, int> = 0>
  Dual(const T &x) : v(x) {}  // NOLINT
  Dual(const T &x, int k) : v(x) { d[k] = T(1.0); }

  Dual &operator+=(const Dual &o) {
    v += o.v;
    for (int k = 0; k < N; ++k) d[k] += o.d[k];
    return *this;
  }
  Dual &operator-=(const Dual &o) {
    v -= o.v;
    for (int k = 0; k < N; ++k) d[k] -= o.d[k];
    return *this;
  }
  Dual &operator*=(const Dual &o) {
    for (int k = 0; k < N; ++k) d[k] = d[k] * o.v + v * o.d[k];
    v *= o.v;
    return *this;
  }
  Dual &operator/=(const Dual &o) {
    const T inv = T(1.0) / o.v;
    const T q = v * inv;
    for (int k = 0; k < N; ++k) d[k] = (d[k] - q * o.d[k]) * inv;
    v = q;
    return *this;
  }
};

template <class T>
struct is_dual : std::false_type {};
template <class T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};

// Underlying double of a possibly nested dual.
inline double primal(double x) { return x; }
template <class T, int N>
double primal(const Dual<T, N> &x) {
  return primal(x.v);
}

// Applies a scalar function with known value and derivative.
template <class T, int N>
Dual<T, N> chain(const Dual<T, N> &x, const T &fx, const T &dfx) {
  Dual<T, N> r;
  r.v = fx;
  for (int k = 0; k < N; ++k) r.d[k] = dfx * x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a) {
  a.v = -a.v;
  for (auto &x : a.d) x = -x;
  return a;
}

#define DIFFKS_DUAL_BINOP(op, opeq)                                           \
  template <class T, int N>                                                   \
  Dual<T, N> operator op(Dual<T, N> a, const Dual<T, N> &b) {                 \
    return a opeq b;                                                          \
  }                                                                           \
  template <class T, int N>                                                   \
  Dual<T, N> operator op(Dual<T, N> a, double b) {                            \
    return a opeq Dual<T, N>(b);                                              \
  }                                                                           \
  template <class T, int N>                                                   \
  Dual<T, N> operator op(double a, const Dual<T, N> &b) {                     \
    return Dual<T, N>(a) opeq b;                                              \
  }

DIFFKS_DUAL_BINOP(+, +=)
DIFFKS_DUAL_BINOP(-, -=)
DIFFKS_DUAL_BINOP(*, *=)
DIFFKS_DUAL_BINOP(/, /=)
#undef DIFFKS_DUAL_BINOP

template <class T, int N>
bool operator<(const Dual<T, N> &a, const Dual<T, N> &b) {
  return primal(a) < primal(b);
}
template <class T, int N>
bool operator<(const Dual<T, N> &a, double b) {
  return primal(a) < b;
}
template <class T, int N>
bool operator>(const Dual<T, N> &a, double b) {
  return primal(a) > b;
}

template <class T, int N>
Dual<T, N> exp(const Dual<T, N> &x) {
  using std::exp;
  const T e = exp(x.v);
  return chain(x, e, e);
}
template <class T, int N>
Dual<T, N> log(const Dual<T, N> &x) {
  using std::log;
  return chain(x, T(log(x.v)), T(1.0 / x.v));
}
template <class T, int N>
Dual<T, N> log1p(const Dual<T, N> &x) {
  using std::log1p;
  return chain(x, T(log1p(x.v)), T(1.0 / (1.0 + x.v)));
}
// Fractional powers at exactly zero: derivatives are taken as zero. Densities
// are clamped to zero below a floor, so this is the one-sided clamped derivative.
template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N> &x) {
  using std::sqrt;
  if (primal(x) == 0.0) return Dual<T, N>(0.0);
  const T s = sqrt(x.v);
  return chain(x, s, T(0.5 / s));
}
template <class T, int N>
Dual<T, N> cbrt(const Dual<T, N> &x) {
  using std::cbrt;
  if (primal(x) == 0.0) return Dual<T, N>(0.0);
  const T c = cbrt(x.v);
  return chain(x, c, T(c / (3.0 * x.v)));
}
template <class T, int N>
Dual<T, N> pow(const Dual<T, N> &x, double p) {
  using std::pow;
  if (primal(x) == 0.0 && p > 0.0) return Dual<T, N>(0.0);
  return chain(x, T(pow(x.v, p)), T(p * pow(x.v, p - 1.0)));
}
template <class T, int N>
Dual<T, N> tanh(const Dual<T, N> &x) {
  using std::tanh;
  const T t = tanh(x.v);
  return chain(x, t, T(1.0 - t * t));
}

}  // namespace diffks::ad
