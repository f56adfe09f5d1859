#pragma once

// One- and two-electron integrals over contracted Cartesian Gaussians using
// McMurchie-Davidson Hermite expansions.

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <vector>

#include "diffks/basis.hpp"
#include "diffks/boys.hpp"
#include "diffks/error.hpp"
#include "diffks/geometry.hpp"
#include "diffks/parallel.hpp"

namespace diffks {

inline constexpr int kMaxEriFunctions = 128;

// Dense (mu nu|lam sig) tensor, chemist's notation, row-major over the four indices.
class EriTensor {
 public:
  EriTensor() = default;
  explicit EriTensor(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n * n, 0.0) {}

  int dim() const { return n_; }
  double operator()(int i, int j, int k, int l) const { return data_[index(i, j, k, l)]; }
  double &operator()(int i, int j, int k, int l) { return data_[index(i, j, k, l)]; }
  const std::vector<double> &data() const { return data_; }

  // J_ij = sum_kl (ij|kl) D_kl
  Mat coulomb(const Mat &D) const {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        g(data_.data(), n_ * n_, n_ * n_);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> d = D;
    const Eigen::Map<const Vec> dv(d.data(), n_ * n_);
    const Vec jv = g * dv;
    Mat J(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) J(i, j) = jv[i * n_ + j];
    return J;
  }

  // K_ij = sum_kl (ik|jl) D_kl
  Mat exchange(const Mat &D) const {
    Mat K = Mat::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        double s = 0.0;
        for (int k = 0; k < n_; ++k)
          for (int l = 0; l < n_; ++l) s += (*this)(i, k, j, l) * D(k, l);
        K(i, j) = s;
      }
    return K;
  }

 private:
  std::size_t index(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * n_ + j) * n_ + k) * n_ + l;
  }
  int n_ = 0;
  std::vector<double> data_;
};

struct IntegralSet {
  Mat S, T, V;
  EriTensor eri;
  Mat core() const { return T + V; }
};

namespace md {

inline constexpr int kMaxL1 = kMaxAngularMomentum + 2;  // kinetic needs l + 2
inline constexpr int kMaxT = 2 * kMaxL1 + 1;

// 1D Hermite expansion coefficients E[i][j][t] of x_A^i x_B^j.
struct Hermite1D {
  std::array<std::array<std::array<double, kMaxT>, kMaxL1 + 1>, kMaxL1 + 1> e{};
  double operator()(int i, int j, int t) const {
    return (t < 0 || t > i + j) ? 0.0 : e[i][j][t];
  }
};

inline Hermite1D hermite_1d(int imax, int jmax, double a, double b, double ab) {
  Hermite1D h;
  const double p = a + b;
  const double q = a * b / p;
  const double inv2p = 0.5 / p;
  h.e[0][0][0] = std::exp(-q * ab * ab);
  for (int i = 0; i <= imax; ++i) {
    if (i > 0) {
      for (int t = 0; t <= i; ++t)
        h.e[i][0][t] = inv2p * h(i - 1, 0, t - 1) - (q * ab / a) * h(i - 1, 0, t) +
                       (t + 1) * h(i - 1, 0, t + 1);
    }
    for (int j = 1; j <= jmax; ++j)
      for (int t = 0; t <= i + j; ++t)
        h.e[i][j][t] = inv2p * h(i, j - 1, t - 1) + (q * ab / b) * h(i, j - 1, t) +
                       (t + 1) * h(i, j - 1, t + 1);
  }
  return h;
}

// Hermite Coulomb integrals R_{tuv}(alpha, PC) for t+u+v <= L.
class HermiteR {
 public:
  HermiteR(int L, double alpha, const Vec3 &pc) : L_(L) {
    const int dim = L + 1;
    std::vector<double> buf(static_cast<std::size_t>(dim) * dim * dim * dim, 0.0);
    auto at = [&](int n, int t, int u, int v) -> double & {
      return buf[((static_cast<std::size_t>(n) * dim + t) * dim + u) * dim + v];
    };
    std::array<double, 4 * kMaxL1 + 2> fm{};
    boys_array(alpha * pc.squaredNorm(), std::span<double>(fm.data(), L + 1));
    double pw = 1.0;
    for (int n = 0; n <= L; ++n) {
      at(n, 0, 0, 0) = pw * fm[n];
      pw *= -2.0 * alpha;
    }
    for (int n = L - 1; n >= 0; --n)
      for (int t = 0; t <= L - n; ++t)
        for (int u = 0; u <= L - n - t; ++u)
          for (int v = 0; v <= L - n - t - u; ++v) {
            if (t + u + v == 0) continue;
            double r;
            if (t > 0)
              r = (t > 1 ? (t - 1) * at(n + 1, t - 2, u, v) : 0.0) + pc.x() * at(n + 1, t - 1, u, v);
            else if (u > 0)
              r = (u > 1 ? (u - 1) * at(n + 1, t, u - 2, v) : 0.0) + pc.y() * at(n + 1, t, u - 1, v);
            else
              r = (v > 1 ? (v - 1) * at(n + 1, t, u, v - 2) : 0.0) + pc.z() * at(n + 1, t, u, v - 1);
            at(n, t, u, v) = r;
          }
    r0_.assign(static_cast<std::size_t>(dim) * dim * dim, 0.0);
    for (int t = 0; t <= L; ++t)
      for (int u = 0; u <= L - t; ++u)
        for (int v = 0; v <= L - t - u; ++v) r0_[(t * dim + u) * dim + v] = at(0, t, u, v);
  }
  double operator()(int t, int u, int v) const {
    const int dim = L_ + 1;
    return r0_[(t * dim + u) * dim + v];
  }

 private:
  int L_;
  std::vector<double> r0_;
};

// Product of two primitives of an AO pair, expanded in Hermite Gaussians about P.
struct PrimitivePair {
  double p = 0.0;
  Vec3 P = Vec3::Zero();
  double coef = 0.0;
  Hermite1D ex, ey, ez;
};

struct FunctionPair {
  CartesianPowers a, b;
  std::vector<PrimitivePair> prims;
};

inline FunctionPair make_pair(const AOBasis &basis, int mu, int nu, int extra_j = 0) {
  const auto &fa = basis.functions[mu];
  const auto &fb = basis.functions[nu];
  const auto &sa = basis.shells[fa.shell];
  const auto &sb = basis.shells[fb.shell];
  const auto ca = sa.primitive_coefficients();
  const auto cb = sb.primitive_coefficients();
  const Vec3 ab = sa.center - sb.center;
  FunctionPair fp{fa.powers, fb.powers, {}};
  fp.prims.reserve(ca.size() * cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i)
    for (std::size_t j = 0; j < cb.size(); ++j) {
      const double a = sa.exponents[i], b = sb.exponents[j];
      PrimitivePair pp;
      pp.p = a + b;
      pp.P = (a * sa.center + b * sb.center) / pp.p;
      pp.coef = ca[i] * cb[j] * fa.factor * fb.factor;
      pp.ex = hermite_1d(fa.powers.x, fb.powers.x + extra_j, a, b, ab.x());
      pp.ey = hermite_1d(fa.powers.y, fb.powers.y + extra_j, a, b, ab.y());
      pp.ez = hermite_1d(fa.powers.z, fb.powers.z + extra_j, a, b, ab.z());
      fp.prims.push_back(std::move(pp));
    }
  return fp;
}

}  // namespace md

// Overlap, kinetic, and nuclear-attraction matrices.
inline IntegralSet one_electron(const AOBasis &basis, const Molecule &mol) {
  const int n = basis.ao_count();
  IntegralSet out;
  out.S = Mat::Zero(n, n);
  out.T = Mat::Zero(n, n);
  out.V = Mat::Zero(n, n);
  for (int mu = 0; mu < n; ++mu) {
    for (int nu = 0; nu <= mu; ++nu) {
      const auto pair = md::make_pair(basis, mu, nu, 2);
      const auto &A = pair.a;
      const auto &B = pair.b;
      const auto &shell_b = basis.shells[basis.functions[nu].shell];
      double s = 0.0, t = 0.0, v = 0.0;
      for (std::size_t k = 0; k < pair.prims.size(); ++k) {
        const auto &pp = pair.prims[k];
        const double b = shell_b.exponents[k % shell_b.exponents.size()];
        const double root = std::sqrt(M_PI / pp.p);
        auto s1 = [&](const md::Hermite1D &e, int i, int j) {
          return j < 0 ? 0.0 : e(i, j, 0) * root;
        };
        auto t1 = [&](const md::Hermite1D &e, int i, int j) {
          return -0.5 * (j * (j - 1) * s1(e, i, j - 2) - 2.0 * b * (2 * j + 1) * s1(e, i, j) +
                         4.0 * b * b * s1(e, i, j + 2));
        };
        const double sx = s1(pp.ex, A.x, B.x), sy = s1(pp.ey, A.y, B.y), sz = s1(pp.ez, A.z, B.z);
        s += pp.coef * sx * sy * sz;
        t += pp.coef * (t1(pp.ex, A.x, B.x) * sy * sz + sx * t1(pp.ey, A.y, B.y) * sz +
                        sx * sy * t1(pp.ez, A.z, B.z));
        const int L = A.l() + B.l();
        for (const auto &atom : mol.atoms) {
          const md::HermiteR R(L, pp.p, pp.P - atom.position);
          double acc = 0.0;
          for (int tt = 0; tt <= A.x + B.x; ++tt)
            for (int uu = 0; uu <= A.y + B.y; ++uu)
              for (int vv = 0; vv <= A.z + B.z; ++vv)
                acc += pp.ex(A.x, B.x, tt) * pp.ey(A.y, B.y, uu) * pp.ez(A.z, B.z, vv) *
                       R(tt, uu, vv);
          v -= atom.atomic_number * pp.coef * 2.0 * M_PI / pp.p * acc;
        }
      }
      out.S(mu, nu) = out.S(nu, mu) = s;
      out.T(mu, nu) = out.T(nu, mu) = t;
      out.V(mu, nu) = out.V(nu, mu) = v;
    }
  }
  return out;
}

// Electron-repulsion tensor; unique quartets are computed once and mirrored.
inline EriTensor eri(const AOBasis &basis) {
  const int n = basis.ao_count();
  if (n > kMaxEriFunctions)
    throw InputError("basis has " + std::to_string(n) + " functions; dense ERI limit is " +
                     std::to_string(kMaxEriFunctions));
  std::vector<md::FunctionPair> pairs;
  std::vector<std::pair<int, int>> index;
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu <= mu; ++nu) {
      pairs.push_back(md::make_pair(basis, mu, nu));
      index.emplace_back(mu, nu);
    }
  EriTensor g(n);
  const double pref = 2.0 * std::pow(M_PI, 2.5);
  parallel_batches(
      pairs.size(),
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t ij = begin; ij < end; ++ij) {
          const auto &bra = pairs[ij];
          const auto &A = bra.a;
          const auto &B = bra.b;
          for (std::size_t kl = 0; kl <= ij; ++kl) {
            const auto &ket = pairs[kl];
            const auto &C = ket.a;
            const auto &D = ket.b;
            const int L = A.l() + B.l() + C.l() + D.l();
            double value = 0.0;
            for (const auto &p1 : bra.prims) {
              for (const auto &p2 : ket.prims) {
                const double alpha = p1.p * p2.p / (p1.p + p2.p);
                const md::HermiteR R(L, alpha, p1.P - p2.P);
                double acc = 0.0;
                for (int t = 0; t <= A.x + B.x; ++t)
                  for (int u = 0; u <= A.y + B.y; ++u)
                    for (int v = 0; v <= A.z + B.z; ++v) {
                      const double e1 = p1.ex(A.x, B.x, t) * p1.ey(A.y, B.y, u) * p1.ez(A.z, B.z, v);
                      if (e1 == 0.0) continue;
                      double inner = 0.0;
                      for (int tau = 0; tau <= C.x + D.x; ++tau)
                        for (int nuu = 0; nuu <= C.y + D.y; ++nuu)
                          for (int phi = 0; phi <= C.z + D.z; ++phi) {
                            const double sign = ((tau + nuu + phi) % 2) ? -1.0 : 1.0;
                            inner += sign * p2.ex(C.x, D.x, tau) * p2.ey(C.y, D.y, nuu) *
                                     p2.ez(C.z, D.z, phi) * R(t + tau, u + nuu, v + phi);
                          }
                      acc += e1 * inner;
                    }
                value += p1.coef * p2.coef * pref / (p1.p * p2.p * std::sqrt(p1.p + p2.p)) * acc;
              }
            }
            const auto [i, j] = index[ij];
            const auto [k, l] = index[kl];
            g(i, j, k, l) = g(j, i, k, l) = g(i, j, l, k) = g(j, i, l, k) = value;
            g(k, l, i, j) = g(l, k, i, j) = g(k, l, j, i) = g(l, k, j, i) = value;
          }
        }
      },
      1);
  return g;
}

inline IntegralSet compute_integrals(const AOBasis &basis, const Molecule &mol) {
  IntegralSet ints = one_electron(basis, mol);
  ints.eri = eri(basis);
  return ints;
}

}  // namespace diffks
