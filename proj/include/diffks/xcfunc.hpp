#pragma once

// Hybrid XC: E_xc = alpha * E_baseline[n] + beta * int n f(features) dr.
// Per-point inputs are x = (n_up, n_dn, sigma_uu, sigma_ud, sigma_dd).

#include <array>
#include <string>
#include <vector>

#include "diffks/autodiff.hpp"
#include "diffks/functionals.hpp"
#include "diffks/grid.hpp"
#include "diffks/neuralnet.hpp"
#include "diffks/parallel.hpp"

namespace diffks {

enum class BaselineKind { lda_x, lda_xc, pbe, hf_exchange };

// Network inputs: lda = (n^{1/3}, xi^2); gga adds the reduced gradient s.
enum class FeatureSpec { none, lda, gga };

inline int feature_count(FeatureSpec f) { return f == FeatureSpec::none ? 0 : f == FeatureSpec::lda ? 2 : 3; }

inline constexpr double kXiFloor = 1e-12;

struct HybridXC {
  std::string name;
  BaselineKind baseline = BaselineKind::lda_xc;
  FeatureSpec features = FeatureSpec::none;
  NeuralNet nn;
  double alpha = 1.0;
  double beta = 0.0;

  bool has_network() const { return features != FeatureSpec::none; }
  bool is_gga() const { return baseline == BaselineKind::pbe || features == FeatureSpec::gga; }
  bool exact_exchange() const { return baseline == BaselineKind::hf_exchange; }
  bool needs_grid() const { return !exact_exchange() || has_network(); }

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw InputError("alpha and beta must be finite");
    if (has_network()) {
      nn.validate();
      if (nn.input_dim() != feature_count(features))
        throw InputError("network takes " + std::to_string(nn.input_dim()) + " inputs but the feature set has " +
                         std::to_string(feature_count(features)));
    }
  }
};

inline std::vector<int> default_layers(FeatureSpec f) { return {feature_count(f), 32, 32, 1}; }

// Functional names: lda, pbe, hf, nnlda, nnpbe. Networks start at alpha = 1,
// beta = 0 so the untrained model is the baseline.
inline HybridXC make_functional(const std::string &name, std::uint64_t seed = 0,
                                Activation act = Activation::softplus, std::vector<int> layers = {}) {
  HybridXC h;
  h.name = name;
  if (name == "lda") {
    h.baseline = BaselineKind::lda_xc;
  } else if (name == "pbe") {
    h.baseline = BaselineKind::pbe;
  } else if (name == "hf") {
    h.baseline = BaselineKind::hf_exchange;
  } else if (name == "nnlda" || name == "nnpbe") {
    h.baseline = name == "nnlda" ? BaselineKind::lda_xc : BaselineKind::pbe;
    h.features = name == "nnlda" ? FeatureSpec::lda : FeatureSpec::gga;
    if (layers.empty()) layers = default_layers(h.features);
    h.nn = init_network(layers, act, seed);
  } else {
    throw InputError("unknown functional '" + name + "' (expected lda, pbe, hf, nnlda, nnpbe)");
  }
  h.validate();
  return h;
}

// Feature map; returns the number of features written.
template <class T>
int nn_features(FeatureSpec spec, const T &nu, const T &nd, const T &suu, const T &sud, const T &sdd,
                T *out) {
  using std::cbrt;
  using std::pow;
  using std::sqrt;
  const T n = nu + nd;
  const double np = ad::primal(n);
  out[0] = cbrt(n);
  const T xi = np >= kXiFloor ? T((nu - nd) / n) : T((nu - nd) / kXiFloor);
  out[1] = xi * xi;
  if (spec != FeatureSpec::gga) return 2;
  static const double c = 2.0 * std::cbrt(3.0 * M_PI * M_PI);
  const T sigma = suu + 2.0 * sud + sdd;
  if (np > 0.0 && ad::primal(sigma) > 0.0)
    out[2] = sqrt(sigma) / (c * pow(n, 4.0 / 3.0));
  else
    out[2] = T(0.0);
  return 3;
}

template <class T>
T baseline_density(BaselineKind kind, const T &nu, const T &nd, const T &suu, const T &sud, const T &sdd) {
  switch (kind) {
    case BaselineKind::lda_x: return xc::slater_exchange(nu, nd);
    case BaselineKind::lda_xc: return xc::lda_xc(nu, nd);
    case BaselineKind::pbe: return xc::pbe_xc(nu, nd, suu, sud, sdd);
    case BaselineKind::hf_exchange: return T(0.0);  // handled through the ERIs
  }
  return T(0.0);
}

template <class T>
T neural_density(const HybridXC &h, const T &nu, const T &nd, const T &suu, const T &sud, const T &sdd) {
  T feats[3];
  nn_features(h.features, nu, nd, suu, sud, sdd, feats);
  return (nu + nd) * forward(h.nn, feats);
}

// Full per-point energy density; used by the dual-number paths.
template <class T>
T hybrid_density(const HybridXC &h, const T &nu, const T &nd, const T &suu, const T &sud, const T &sdd) {
  T e = h.alpha * baseline_density(h.baseline, nu, nd, suu, sud, sdd);
  if (h.has_network() && h.beta != 0.0) e = e + h.beta * neural_density(h, nu, nd, suu, sud, sdd);
  return e;
}

using PointInput = std::array<double, 5>;

inline PointInput point_input(const GridDensity &d, Eigen::Index i) {
  double suu = 0, sud = 0, sdd = 0;
  for (int k = 0; k < 3; ++k) {
    suu += d.grad_up[k][i] * d.grad_up[k][i];
    sud += d.grad_up[k][i] * d.grad_dn[k][i];
    sdd += d.grad_dn[k][i] * d.grad_dn[k][i];
  }
  return {d.n_up[i], d.n_dn[i], suu, sud, sdd};
}

struct NeuralTerm {
  Mat features;  // npts x nfeat
  Vec f;
  Mat df;  // d f / d features
};

inline NeuralTerm neural_term(const GridDensity &d, const NeuralNet &nn, FeatureSpec spec) {
  const int nf = feature_count(spec);
  if (nf == 0 || nn.input_dim() != nf)
    throw InputError("network input dimension " + std::to_string(nn.input_dim()) +
                     " does not match feature count " + std::to_string(nf));
  const auto n = d.size();
  NeuralTerm t{Mat(n, nf), Vec(n), Mat(n, nf)};
  parallel_batches(static_cast<std::size_t>(n), [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> gp(nn.params.size());
    for (std::size_t i = b; i < e; ++i) {
      const auto x = point_input(d, static_cast<Eigen::Index>(i));
      double feats[3], grad[3];
      nn_features(spec, x[0], x[1], x[2], x[3], x[4], feats);
      t.f[i] = forward(nn, feats);
      vjp(nn, feats, 1.0, gp.data(), grad);
      for (int k = 0; k < nf; ++k) {
        t.features(i, k) = feats[k];
        t.df(i, k) = grad[k];
      }
    }
  });
  return t;
}

struct XCResult {
  double e_xc = 0.0;
  double e_baseline = 0.0;  // E_baseline[n] (unscaled)
  double e_network = 0.0;   // sum_i w_i n_i f_i (unscaled)
  Vec v_up, v_dn;
  Vec vs_uu, vs_ud, vs_dd;  // d e / d sigma; empty for LDA-type functionals
  bool gga = false;
};

namespace detail {

// e and its first derivatives for the baseline at one point.
inline void baseline_point(BaselineKind kind, const PointInput &x, double &e, double *de) {
  using D5 = ad::Dual<double, 5>;
  const D5 r = baseline_density(kind, D5(x[0], 0), D5(x[1], 1), D5(x[2], 2), D5(x[3], 3), D5(x[4], 4));
  e = r.v;
  for (int k = 0; k < 5; ++k) de[k] = r.d[k];
}

}  // namespace detail

// Energy and potentials. The neural part goes through neural_term and an
// explicit chain rule from the features back to (n_up, n_dn, sigma).
inline XCResult hybrid_exc(const GridDensity &d, const MolGrid &grid, const HybridXC &h) {
  const auto n = d.size();
  if (static_cast<std::size_t>(n) != grid.size()) throw InputError("density and grid sizes differ");
  XCResult r;
  r.gga = h.is_gga();
  r.v_up = Vec::Zero(n);
  r.v_dn = Vec::Zero(n);
  r.vs_uu = Vec::Zero(n);
  r.vs_ud = Vec::Zero(n);
  r.vs_dd = Vec::Zero(n);
  Vec eb = Vec::Zero(n), en = Vec::Zero(n);

  parallel_batches(static_cast<std::size_t>(n), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto x = point_input(d, static_cast<Eigen::Index>(i));
      double val, de[5];
      detail::baseline_point(h.baseline, x, val, de);
      eb[i] = val;
      r.v_up[i] = h.alpha * de[0];
      r.v_dn[i] = h.alpha * de[1];
      r.vs_uu[i] = h.alpha * de[2];
      r.vs_ud[i] = h.alpha * de[3];
      r.vs_dd[i] = h.alpha * de[4];
    }
  });

  if (h.has_network()) {
    const NeuralTerm t = neural_term(d, h.nn, h.features);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double nu = d.n_up[i], nd = d.n_dn[i], nt = nu + nd;
      en[i] = nt * t.f[i];
      if (h.beta == 0.0) continue;
      // d(n f)/d n_s = f + n sum_k df/dx_k dx_k/dn_s
      double gu = t.f[i], gd = t.f[i];
      if (nt > 0.0) {
        const double x1 = t.features(i, 0);
        const double dx1 = 1.0 / (3.0 * x1 * x1);
        const double xi = (nu - nd) / std::max(nt, kXiFloor);
        const double dxi_u = (1.0 - xi) / nt, dxi_d = -(1.0 + xi) / nt;
        gu += nt * (t.df(i, 0) * dx1 + t.df(i, 1) * 2.0 * xi * dxi_u);
        gd += nt * (t.df(i, 0) * dx1 + t.df(i, 1) * 2.0 * xi * dxi_d);
        if (h.features == FeatureSpec::gga) {
          const double s = t.features(i, 2);
          gu += nt * t.df(i, 2) * (-4.0 / 3.0) * s / nt;
          gd += nt * t.df(i, 2) * (-4.0 / 3.0) * s / nt;
          const auto x = point_input(d, i);
          const double sigma = x[2] + 2.0 * x[3] + x[4];
          if (sigma > 0.0 && s > 0.0) {
            const double dsig = h.beta * nt * t.df(i, 2) * s / (2.0 * sigma);
            r.vs_uu[i] += dsig;
            r.vs_ud[i] += 2.0 * dsig;
            r.vs_dd[i] += dsig;
          }
        }
      }
      r.v_up[i] += h.beta * gu;
      r.v_dn[i] += h.beta * gd;
    }
  }
  r.e_baseline = integrate(grid, eb);
  r.e_network = h.has_network() ? integrate(grid, en) : 0.0;
  r.e_xc = h.alpha * r.e_baseline + h.beta * r.e_network;
  if (!std::isfinite(r.e_xc)) throw NumericalError("non-finite XC energy");
  if (!r.gga) {
    r.vs_uu.resize(0);
    r.vs_ud.resize(0);
    r.vs_dd.resize(0);
  }
  return r;
}

// Same energy and potentials from dual numbers through hybrid_density.
inline XCResult hybrid_exc_dual(const GridDensity &d, const MolGrid &grid, const HybridXC &h) {
  using D5 = ad::Dual<double, 5>;
  const auto n = d.size();
  XCResult r;
  r.gga = h.is_gga();
  r.v_up = r.v_dn = r.vs_uu = r.vs_ud = r.vs_dd = Vec::Zero(n);
  Vec e(n);
  parallel_batches(static_cast<std::size_t>(n), [&](std::size_t, std::size_t b, std::size_t end) {
    for (std::size_t i = b; i < end; ++i) {
      const auto x = point_input(d, static_cast<Eigen::Index>(i));
      const D5 v = hybrid_density(h, D5(x[0], 0), D5(x[1], 1), D5(x[2], 2), D5(x[3], 3), D5(x[4], 4));
      e[i] = v.v;
      r.v_up[i] = v.d[0];
      r.v_dn[i] = v.d[1];
      r.vs_uu[i] = v.d[2];
      r.vs_ud[i] = v.d[3];
      r.vs_dd[i] = v.d[4];
    }
  });
  r.e_xc = integrate(grid, e);
  return r;
}

namespace detail {

// Weighted AO product Phi^T diag(a) Phi + sum_k Phi^T diag(b_k) dPhi_k, then
// symmetrized so the gradient channel gives (G + G^T).
inline Mat weighted_ao_product(const AOValues &ao, const Vec &a, const std::array<Vec, 3> *b) {
  Mat V = ao.phi.transpose() * (a.asDiagonal() * ao.phi);
  if (b) {
    Mat G = Mat::Zero(V.rows(), V.cols());
    for (int k = 0; k < 3; ++k) G.noalias() += ao.phi.transpose() * ((*b)[k].asDiagonal() * ao.grad[k]);
    V += G + G.transpose();
  }
  return 0.5 * (V + V.transpose());
}

}  // namespace detail

// V_xc per spin: sum_i w_i v_s phi_mu phi_nu plus the gradient channel
// sum_i w_i (2 vs_ss grad n_s + vs_ud grad n_s') . grad(phi_mu phi_nu).
inline std::array<Mat, 2> vxc_matrix(const XCResult &xc, const GridDensity &d, const AOValues &ao,
                                     const MolGrid &grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (xc.v_up.size() != n || ao.phi.rows() != n) throw InputError("XC result, AO values and grid disagree");
  const Eigen::Map<const Vec> w(grid.weights.data(), n);
  std::array<Mat, 2> out;
  for (int s = 0; s < 2; ++s) {
    const Vec a = w.cwiseProduct(s == 0 ? xc.v_up : xc.v_dn);
    if (!xc.gga) {
      out[s] = detail::weighted_ao_product(ao, a, nullptr);
      continue;
    }
    const Vec &vss = s == 0 ? xc.vs_uu : xc.vs_dd;
    const auto &gs = s == 0 ? d.grad_up : d.grad_dn;
    const auto &go = s == 0 ? d.grad_dn : d.grad_up;
    std::array<Vec, 3> b;
    for (int k = 0; k < 3; ++k)
      b[k] = w.cwiseProduct((2.0 * vss).cwiseProduct(gs[k]) + xc.vs_ud.cwiseProduct(go[k]));
    out[s] = detail::weighted_ao_product(ao, a, &b);
  }
  return out;
}

// First-order density change on the grid for symmetric dP_up, dP_dn. Points
// clamped in the base density stay frozen.
inline GridDensity density_perturbation(const Mat &dP_up, const Mat &dP_dn, const AOValues &ao,
                                        const GridDensity &base) {
  GridDensity d;
  auto channel = [&](const Mat &P, const Vec &n0, Vec &n, std::array<Vec, 3> &g) {
    const Mat PhiP = ao.phi * P;
    n = (PhiP.array() * ao.phi.array()).rowwise().sum();
    for (int k = 0; k < 3; ++k) g[k] = 2.0 * (PhiP.array() * ao.grad[k].array()).rowwise().sum();
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      if (n0[i] == 0.0) {
        n[i] = 0.0;
        for (int k = 0; k < 3; ++k) g[k][i] = 0.0;
      }
    }
  };
  channel(dP_up, base.n_up, d.n_up, d.grad_up);
  channel(dP_dn, base.n_dn, d.n_dn, d.grad_dn);
  return d;
}

// Directional input change (dn_up, dn_dn, dsigma_uu, dsigma_ud, dsigma_dd).
inline PointInput point_perturbation(const GridDensity &d, const GridDensity &dd, Eigen::Index i) {
  double suu = 0, sud = 0, sdd = 0;
  for (int k = 0; k < 3; ++k) {
    suu += 2.0 * d.grad_up[k][i] * dd.grad_up[k][i];
    sud += d.grad_up[k][i] * dd.grad_dn[k][i] + dd.grad_up[k][i] * d.grad_dn[k][i];
    sdd += 2.0 * d.grad_dn[k][i] * dd.grad_dn[k][i];
  }
  return {dd.n_up[i], dd.n_dn[i], suu, sud, sdd};
}

// Per-point first and second derivatives of the energy density in x, from
// nested duals. Built once per density and reused by every kernel product.
struct XCKernel {
  bool gga = false;
  std::vector<std::array<double, 5>> grad;
  std::vector<std::array<double, 15>> hess;  // upper triangle, row-major
};

inline int hess_index(int a, int b) {
  if (a > b) std::swap(a, b);
  return a * 5 - a * (a - 1) / 2 + (b - a);
}

inline XCKernel build_kernel(const GridDensity &d, const HybridXC &h) {
  using D5 = ad::Dual<double, 5>;
  using DD = ad::Dual<D5, 5>;
  const auto n = static_cast<std::size_t>(d.size());
  XCKernel K;
  K.gga = h.is_gga();
  K.grad.resize(n);
  K.hess.resize(n);
  parallel_batches(n, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto x = point_input(d, static_cast<Eigen::Index>(i));
      DD in[5];
      for (int k = 0; k < 5; ++k) {
        in[k] = DD(D5(x[k], k), k);
      }
      const DD v = hybrid_density(h, in[0], in[1], in[2], in[3], in[4]);
      for (int a = 0; a < 5; ++a) {
        K.grad[i][a] = v.d[a].v;
        for (int c = a; c < 5; ++c) K.hess[i][hess_index(a, c)] = v.d[a].d[c];
      }
    }
  });
  return K;
}

// Change of V_xc per spin induced by the grid density change dd.
inline std::array<Mat, 2> apply_kernel(const XCKernel &K, const GridDensity &d, const GridDensity &dd,
                                       const AOValues &ao, const MolGrid &grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Vec dv[5];
  for (auto &v : dv) v = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto dx = point_perturbation(d, dd, i);
    for (int a = 0; a < 5; ++a) {
      double s = 0.0;
      for (int c = 0; c < 5; ++c) s += K.hess[i][hess_index(a, c)] * dx[c];
      dv[a][i] = s;
    }
  }
  const Eigen::Map<const Vec> w(grid.weights.data(), n);
  std::array<Mat, 2> out;
  for (int s = 0; s < 2; ++s) {
    const Vec a = w.cwiseProduct(dv[s]);
    if (!K.gga) {
      out[s] = detail::weighted_ao_product(ao, a, nullptr);
      continue;
    }
    const int ss = s == 0 ? 2 : 4;
    const auto &gs = s == 0 ? d.grad_up : d.grad_dn;
    const auto &go = s == 0 ? d.grad_dn : d.grad_up;
    const auto &dgs = s == 0 ? dd.grad_up : dd.grad_dn;
    const auto &dgo = s == 0 ? dd.grad_dn : dd.grad_up;
    std::array<Vec, 3> b;
    for (int k = 0; k < 3; ++k) {
      b[k] = Vec(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        b[k][i] = w[i] * (2.0 * dv[ss][i] * gs[k][i] + 2.0 * K.grad[i][ss] * dgs[k][i] +
                          dv[3][i] * go[k][i] + K.grad[i][3] * dgo[k][i]);
      }
    }
    out[s] = detail::weighted_ao_product(ao, a, &b);
  }
  return out;
}

// Gradients of E_xc w.r.t. (alpha, beta, network params) at fixed density.
struct XCParamGrad {
  double d_alpha = 0.0;
  double d_beta = 0.0;
  std::vector<double> d_params;
};

inline XCParamGrad xc_param_grad(const GridDensity &d, const MolGrid &grid, const HybridXC &h) {
  XCParamGrad g;
  const auto n = static_cast<std::size_t>(d.size());
  std::vector<double> eb(n), en(n);
  const std::size_t nb = batch_count(n);
  std::vector<std::vector<double>> partial(h.has_network() ? nb : 0);
  parallel_batches(n, [&](std::size_t bi, std::size_t b, std::size_t e) {
    if (h.has_network()) partial[bi].assign(h.nn.params.size(), 0.0);
    for (std::size_t i = b; i < e; ++i) {
      const auto x = point_input(d, static_cast<Eigen::Index>(i));
      eb[i] = baseline_density(h.baseline, x[0], x[1], x[2], x[3], x[4]);
      if (!h.has_network()) continue;
      double feats[3];
      nn_features(h.features, x[0], x[1], x[2], x[3], x[4], feats);
      const double nt = x[0] + x[1];
      en[i] = nt * forward(h.nn, feats);
      vjp(h.nn, feats, grid.weights[i] * nt, partial[bi].data(), static_cast<double *>(nullptr));
    }
  });
  g.d_alpha = integrate(grid, Eigen::Map<const Vec>(eb.data(), n));
  g.d_beta = integrate(grid, Eigen::Map<const Vec>(en.data(), n));
  g.d_params.assign(h.nn.params.size(), 0.0);
  for (const auto &p : partial)
    for (std::size_t k = 0; k < p.size(); ++k) g.d_params[k] += h.beta * p[k];
  return g;
}

// d/dtheta of the directional derivative of E_xc along the density change dd,
// i.e. <dP, dV_xc/dtheta>. Forward-over-reverse through the network.
inline XCParamGrad xc_param_grad_directional(const GridDensity &d, const GridDensity &dd, const MolGrid &grid,
                                             const HybridXC &h) {
  using D1 = ad::Dual<double, 1>;
  XCParamGrad g;
  const auto n = static_cast<std::size_t>(d.size());
  std::vector<double> eb(n), en(n);
  const std::size_t nb = batch_count(n);
  std::vector<std::vector<D1>> partial(h.has_network() ? nb : 0);
  parallel_batches(n, [&](std::size_t bi, std::size_t b, std::size_t e) {
    if (h.has_network()) partial[bi].assign(h.nn.params.size(), D1(0.0));
    for (std::size_t i = b; i < e; ++i) {
      const auto x = point_input(d, static_cast<Eigen::Index>(i));
      const auto dx = point_perturbation(d, dd, static_cast<Eigen::Index>(i));
      D1 in[5];
      for (int k = 0; k < 5; ++k) {
        in[k] = D1(x[k]);
        in[k].d[0] = dx[k];
      }
      eb[i] = baseline_density(h.baseline, in[0], in[1], in[2], in[3], in[4]).d[0];
      if (!h.has_network()) continue;
      D1 feats[3];
      nn_features(h.features, in[0], in[1], in[2], in[3], in[4], feats);
      const D1 nt = in[0] + in[1];
      en[i] = (nt * forward(h.nn, feats)).d[0];
      vjp(h.nn, feats, D1(grid.weights[i]) * nt, partial[bi].data(), static_cast<D1 *>(nullptr));
    }
  });
  g.d_alpha = integrate(grid, Eigen::Map<const Vec>(eb.data(), n));
  g.d_beta = integrate(grid, Eigen::Map<const Vec>(en.data(), n));
  g.d_params.assign(h.nn.params.size(), 0.0);
  for (const auto &p : partial)
    for (std::size_t k = 0; k < p.size(); ++k) g.d_params[k] += h.beta * p[k].d[0];
  return g;
}

}  // namespace diffks
