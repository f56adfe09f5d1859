#pragma once

// Gradients with respect to theta = [network params | alpha | beta].
// Energies use stationarity of the converged KS energy; density-dependent
// losses go through the adjoint of the SCF fixed point.

#include <functional>
#include <optional>

#include "diffks/scf.hpp"

namespace diffks {

using SpinPair = std::array<Mat, 2>;

inline std::size_t theta_size(const HybridXC &h) { return h.nn.params.size() + 2; }

inline Vec theta_of(const HybridXC &h) {
  const std::size_t np = h.nn.params.size();
  Vec t(np + 2);
  for (std::size_t k = 0; k < np; ++k) t[k] = h.nn.params[k];
  t[np] = h.alpha;
  t[np + 1] = h.beta;
  return t;
}

inline void set_theta(HybridXC &h, const Vec &t) {
  const std::size_t np = h.nn.params.size();
  if (static_cast<std::size_t>(t.size()) != np + 2)
    throw InputError("theta has length " + std::to_string(t.size()) + ", expected " + std::to_string(np + 2));
  for (std::size_t k = 0; k < np; ++k) h.nn.params[k] = t[k];
  h.alpha = t[np];
  h.beta = t[np + 1];
}

inline Vec pack_theta_grad(const XCParamGrad &g, std::size_t np) {
  Vec out = Vec::Zero(np + 2);
  for (std::size_t k = 0; k < g.d_params.size(); ++k) out[k] = g.d_params[k];
  out[np] = g.d_alpha;
  out[np + 1] = g.d_beta;
  return out;
}

inline void require_converged(const SCFSolution &sol) {
  if (!sol.converged)
    throw NumericalError("gradient requested for an unconverged SCF solution (" + std::to_string(sol.iterations) +
                         " iterations)");
}

// dE_total/dtheta = dE_xc/dtheta at the fixed converged density.
inline Vec energy_grad_stationary(const SCFSystem &sys, const SCFSolution &sol, const HybridXC &h) {
  require_converged(sol);
  const std::size_t np = h.nn.params.size();
  if (sys.mol.electron_count() == 0) return Vec::Zero(np + 2);
  XCParamGrad g;
  if (sys.has_grid) {
    const auto d = density_on_grid(sol.P[0], sol.P[1], sys.ao);
    g = xc_param_grad(d, sys.grid, h);
  } else {
    g.d_params.assign(np, 0.0);
  }
  if (h.exact_exchange()) {
    g.d_alpha = 0.0;
    for (int s = 0; s < 2; ++s) g.d_alpha -= 0.5 * sol.P[s].cwiseProduct(sys.ints.eri.exchange(sol.P[s])).sum();
  }
  return pack_theta_grad(g, np);
}

inline constexpr double kMinResponseGap = 1e-6;

// Linear response of the converged SCF: density change from a Fock change
// (first-order eigenpair perturbation) and Fock change from a density change
// (Coulomb + XC kernel). Both maps are self-adjoint under the Frobenius
// product over the two spin channels.
class ScfResponse {
 public:
  ScfResponse(const SCFSystem &sys, const SCFSolution &sol, const HybridXC &h) : sys_(sys), sol_(sol), h_(h) {
    require_converged(sol);
    for (int s = 0; s < 2; ++s) {
      const int nmo = static_cast<int>(sol.C[s].cols());
      std::vector<bool> is_occ(nmo, false);
      for (int i : sol.occ[s]) is_occ[i] = true;
      std::vector<int> virt;
      for (int a = 0; a < nmo; ++a)
        if (!is_occ[a]) virt.push_back(a);
      const auto &occ = sol.occ[s];
      Co_[s] = Mat(sol.C[s].rows(), occ.size());
      Cv_[s] = Mat(sol.C[s].rows(), virt.size());
      for (std::size_t i = 0; i < occ.size(); ++i) Co_[s].col(i) = sol.C[s].col(occ[i]);
      for (std::size_t a = 0; a < virt.size(); ++a) Cv_[s].col(a) = sol.C[s].col(virt[a]);
      denom_[s] = Mat(virt.size(), occ.size());
      for (std::size_t a = 0; a < virt.size(); ++a)
        for (std::size_t i = 0; i < occ.size(); ++i) {
          const double gap = sol.eps[s][occ[i]] - sol.eps[s][virt[a]];
          if (std::abs(gap) < kMinResponseGap)
            throw NumericalError("occupied/virtual gap " + std::to_string(std::abs(gap)) +
                                 " below 1e-6; response is ill-defined");
          denom_[s](a, i) = gap;
        }
    }
    if (sys.has_grid && !(h.exact_exchange() && !h.has_network())) {
      density_ = density_on_grid(sol.P[0], sol.P[1], sys.ao);
      kernel_ = build_kernel(*density_, h);
    }
  }

  SpinPair response(const SpinPair &X) const {
    SpinPair dP;
    for (int s = 0; s < 2; ++s) {
      const Mat Xs = 0.5 * (X[s] + X[s].transpose());
      const Mat U = (Cv_[s].transpose() * Xs * Co_[s]).cwiseQuotient(denom_[s]);
      const Mat A = Cv_[s] * U * Co_[s].transpose();
      dP[s] = A + A.transpose();
    }
    return dP;
  }

  SpinPair kernel(const SpinPair &dP) const {
    const Mat J = sys_.ints.eri.coulomb(dP[0] + dP[1]);
    SpinPair dF{J, J};
    if (h_.exact_exchange())
      for (int s = 0; s < 2; ++s) dF[s] -= h_.alpha * sys_.ints.eri.exchange(dP[s]);
    if (kernel_) {
      const auto dd = density_perturbation(dP[0], dP[1], sys_.ao, *density_);
      const auto dV = apply_kernel(*kernel_, *density_, dd, sys_.ao, sys_.grid);
      dF[0] += dV[0];
      dF[1] += dV[1];
    }
    for (auto &m : dF) m = 0.5 * (m + m.transpose());
    return dF;
  }

  // sum_s <D_s, dF_s/dtheta>
  Vec theta_contraction(const SpinPair &D) const {
    const std::size_t np = h_.nn.params.size();
    XCParamGrad g;
    g.d_params.assign(np, 0.0);
    if (density_) {
      const auto dd = density_perturbation(D[0], D[1], sys_.ao, *density_);
      g = xc_param_grad_directional(*density_, dd, sys_.grid, h_);
    }
    if (h_.exact_exchange()) {
      g.d_alpha = 0.0;
      for (int s = 0; s < 2; ++s) g.d_alpha -= D[s].cwiseProduct(sys_.ints.eri.exchange(sol_.P[s])).sum();
    }
    return pack_theta_grad(g, np);
  }

  int nao() const { return sys_.nao(); }

 private:
  const SCFSystem &sys_;
  const SCFSolution &sol_;
  const HybridXC &h_;
  SpinPair Co_, Cv_, denom_;
  std::optional<GridDensity> density_;
  std::optional<XCKernel> kernel_;
};

namespace detail {

inline Vec flatten(const SpinPair &m) {
  const auto n = m[0].size();
  Vec v(2 * n);
  v.head(n) = Eigen::Map<const Vec>(m[0].data(), n);
  v.tail(n) = Eigen::Map<const Vec>(m[1].data(), n);
  return v;
}

inline SpinPair unflatten(const Vec &v, int nao) {
  const auto n = static_cast<Eigen::Index>(nao) * nao;
  return {Eigen::Map<const Mat>(v.data(), nao, nao), Eigen::Map<const Mat>(v.data() + n, nao, nao)};
}

}  // namespace detail

struct GmresResult {
  Vec x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
inline GmresResult gmres(const std::function<Vec(const Vec &)> &A, const Vec &b, double tol = 1e-8,
                         int max_iterations = 200, int restart = 30) {
  GmresResult res;
  res.x = Vec::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  while (res.iterations < max_iterations) {
    const Vec r = b - A(res.x);
    double beta = r.norm();
    res.relative_residual = beta / bnorm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      return res;
    }
    const int m = std::min(restart, max_iterations - res.iterations);
    std::vector<Vec> V{r / beta};
    Mat Hm = Mat::Zero(m + 1, m);
    Vec cs = Vec::Zero(m), sn = Vec::Zero(m), g = Vec::Zero(m + 1);
    g[0] = beta;
    int k = 0;
    for (; k < m; ++k) {
      Vec w = A(V[k]);
      ++res.iterations;
      for (int j = 0; j <= k; ++j) {
        Hm(j, k) = w.dot(V[j]);
        w -= Hm(j, k) * V[j];
      }
      Hm(k + 1, k) = w.norm();
      for (int j = 0; j < k; ++j) {
        const double t = cs[j] * Hm(j, k) + sn[j] * Hm(j + 1, k);
        Hm(j + 1, k) = -sn[j] * Hm(j, k) + cs[j] * Hm(j + 1, k);
        Hm(j, k) = t;
      }
      const double den = std::hypot(Hm(k, k), Hm(k + 1, k));
      cs[k] = Hm(k, k) / den;
      sn[k] = Hm(k + 1, k) / den;
      Hm(k, k) = den;
      Hm(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      const bool breakdown = w.norm() <= 1e-300;
      if (!breakdown) V.push_back(w / w.norm());
      if (std::abs(g[k + 1]) / bnorm <= tol || breakdown) {
        ++k;
        break;
      }
    }
    const Vec y = Hm.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    for (int j = 0; j < k; ++j) res.x += y[j] * V[j];
  }
  const Vec r = b - A(res.x);
  res.relative_residual = r.norm() / bnorm;
  res.converged = res.relative_residual <= tol;
  return res;
}

struct ImplicitOptions {
  double tol = 1e-8;
  int max_iterations = 200;
  int restart = 30;
};

struct ImplicitResult {
  Vec grad;
  int iterations = 0;
  double relative_residual = 0.0;
};

// dL/dtheta for a loss L(P_up, P_dn, theta) at the SCF fixed point:
// solve (I - K R) lambda = dL/dP, then dL/dtheta = <R lambda, dF/dtheta> + explicit.
inline ImplicitResult implicit_grad(const SCFSystem &sys, const SCFSolution &sol, const HybridXC &h,
                                    const SpinPair &dLdP, const Vec *explicit_grad = nullptr,
                                    const ImplicitOptions &opts = {}) {
  require_converged(sol);
  const std::size_t np = h.nn.params.size();
  ImplicitResult out;
  out.grad = Vec::Zero(np + 2);
  if (explicit_grad) {
    if (explicit_grad->size() != out.grad.size()) throw InputError("explicit gradient has the wrong length");
    out.grad += *explicit_grad;
  }
  if (sys.mol.electron_count() == 0) return out;
  const int nao = sys.nao();
  const SpinPair g{0.5 * (dLdP[0] + dLdP[0].transpose()), 0.5 * (dLdP[1] + dLdP[1].transpose())};
  if (g[0].cwiseAbs().maxCoeff() == 0.0 && g[1].cwiseAbs().maxCoeff() == 0.0) return out;

  const ScfResponse resp(sys, sol, h);
  auto op = [&](const Vec &v) {
    const auto lam = detail::unflatten(v, nao);
    const auto KR = resp.kernel(resp.response(lam));
    return Vec(v - detail::flatten(KR));
  };
  const auto solve = gmres(op, detail::flatten(g), opts.tol, opts.max_iterations, opts.restart);
  out.iterations = solve.iterations;
  out.relative_residual = solve.relative_residual;
  if (!solve.converged)
    throw NumericalError("adjoint solve did not converge: relative residual " +
                         std::to_string(solve.relative_residual) + " after " + std::to_string(solve.iterations) +
                         " iterations");
  const auto D = resp.response(detail::unflatten(solve.x, nao));
  out.grad += resp.theta_contraction(D);
  return out;
}

// Central differences, component-wise. Test oracle.
inline Vec fd_gradient(const std::function<double(const Vec &)> &loss, const Vec &theta, double h = 1e-4) {
  Vec g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Vec p = theta, m = theta;
    p[k] += h;
    m[k] -= h;
    g[k] = (loss(p) - loss(m)) / (2.0 * h);
  }
  return g;
}

}  // namespace diffks
