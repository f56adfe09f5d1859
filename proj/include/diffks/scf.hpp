#pragma once

// Kohn-Sham SCF. Always spin-resolved internally; restricted runs (spin 0)
// diagonalize once and copy, so P_up == P_dn bitwise.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <deque>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "diffks/grid.hpp"
#include "diffks/integrals.hpp"
#include "diffks/xcfunc.hpp"

namespace diffks {

inline constexpr double kLinearDependenceTol = 1e-7;
inline constexpr double kDiisConditionLimit = 1e12;
inline constexpr double kDegenerateGap = 1e-8;

struct SCFOptions {
  int max_iterations = 100;
  double energy_tol = 1e-8;
  double diis_tol = 1e-6;
  int diis_depth = 8;
  int grid_level = kDefaultGridLevel;
  std::optional<bool> restricted;  // unset: restricted iff spin == 0
  // Optional explicit occupations (MO indices, ascending energy order) for
  // cases where aufbau is ambiguous.
  std::vector<int> occ_up, occ_dn;

  void validate() const {
    if (max_iterations < 1) throw InputError("max_iterations must be >= 1");
    if (!(energy_tol > 0) || !(diis_tol > 0)) throw InputError("SCF tolerances must be positive");
    if (diis_depth < 1) throw InputError("diis_depth must be >= 1");
    grid_level_spec(grid_level);
  }
};

// Tight settings for runs whose gradients feed training.
inline SCFOptions gradient_scf_options(int grid_level = kDefaultGridLevel) {
  SCFOptions o;
  o.energy_tol = 1e-10;
  o.diis_tol = 1e-9;
  o.max_iterations = 200;
  o.grid_level = grid_level;
  return o;
}

struct Orthogonalizer {
  Mat X;
  bool canonical = false;  // columns dropped for near-linear dependence
  int dropped = 0;
};

inline Orthogonalizer orthogonalizer(const Mat &S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  if (es.info() != Eigen::Success) throw NumericalError("overlap eigendecomposition failed");
  const Vec &lam = es.eigenvalues();
  if (!(lam.minCoeff() > 0.0))
    throw NumericalError("overlap matrix is not positive definite (min eigenvalue " +
                         std::to_string(lam.minCoeff()) + ")");
  Orthogonalizer o;
  if (lam.minCoeff() >= kLinearDependenceTol) {
    o.X = es.eigenvectors() * lam.cwiseInverse().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    return o;
  }
  int keep = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) keep += lam[i] >= kLinearDependenceTol;
  o.canonical = true;
  o.dropped = static_cast<int>(lam.size()) - keep;
  o.X = Mat(S.rows(), keep);
  int c = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam[i] >= kLinearDependenceTol) o.X.col(c++) = es.eigenvectors().col(i) / std::sqrt(lam[i]);
  return o;
}

// Everything that depends only on geometry, basis and grid level.
struct SCFSystem {
  Molecule mol;
  std::string basis_name;
  AOBasis basis;
  IntegralSet ints;
  Orthogonalizer orth;
  double e_nuc = 0.0;
  bool has_grid = false;
  int grid_level = kDefaultGridLevel;
  MolGrid grid;
  AOValues ao;

  int nao() const { return basis.ao_count(); }
  int nmo() const { return static_cast<int>(orth.X.cols()); }
};

inline SCFSystem build_system(const Molecule &mol, const std::string &basis_name, int grid_level,
                              bool need_grid) {
  mol.validate();
  SCFSystem s;
  s.mol = mol;
  s.basis_name = basis_name;
  s.basis = load_basis(basis_name, mol);
  s.ints = compute_integrals(s.basis, mol);
  s.orth = orthogonalizer(s.ints.S);
  s.e_nuc = nuclear_repulsion(mol);
  s.grid_level = grid_level;
  grid_level_spec(grid_level);
  if (need_grid) {
    s.has_grid = true;
    s.grid = build_grid(mol, grid_level);
    s.ao = eval_ao(s.basis, s.grid);
  }
  return s;
}

struct FockResult {
  std::array<Mat, 2> F;
  Mat J;
  double e_xc = 0.0;
  double e_coulomb = 0.0;
  std::optional<XCResult> xc;
  std::optional<GridDensity> density;
};

// F_s = T + V + J[P] + V_xc,s, with -alpha K_s for exact exchange.
inline FockResult build_fock(const SCFSystem &sys, const Mat &P_up, const Mat &P_dn, const HybridXC &h) {
  FockResult r;
  const Mat P = P_up + P_dn;
  const Mat H = sys.ints.core();
  r.J = sys.ints.eri.coulomb(P);
  r.e_coulomb = 0.5 * P.cwiseProduct(r.J).sum();
  r.F[0] = H + r.J;
  r.F[1] = r.F[0];
  if (h.exact_exchange()) {
    const Mat Ku = sys.ints.eri.exchange(P_up);
    const Mat Kd = sys.ints.eri.exchange(P_dn);
    r.F[0] -= h.alpha * Ku;
    r.F[1] -= h.alpha * Kd;
    r.e_xc -= 0.5 * h.alpha * (P_up.cwiseProduct(Ku).sum() + P_dn.cwiseProduct(Kd).sum());
  }
  if (h.needs_grid() && (!h.exact_exchange() || (h.has_network() && h.beta != 0.0))) {
    if (!sys.has_grid) throw InputError("functional needs a grid but the system was built without one");
    r.density = density_on_grid(P_up, P_dn, sys.ao);
    r.xc = hybrid_exc(*r.density, sys.grid, h);
    const auto V = vxc_matrix(*r.xc, *r.density, sys.ao, sys.grid);
    r.F[0] += V[0];
    r.F[1] += V[1];
    r.e_xc += r.xc->e_xc;
  }
  r.F[0] = 0.5 * (r.F[0] + r.F[0].transpose());
  r.F[1] = 0.5 * (r.F[1] + r.F[1].transpose());
  return r;
}

// Pulay DIIS over both spin channels with shared coefficients.
class Diis {
 public:
  explicit Diis(int depth) : depth_(depth) {}

  void push(const std::array<Mat, 2> &F, const std::array<Mat, 2> &err) {
    hist_.push_back({F, err});
    if (static_cast<int>(hist_.size()) > depth_) hist_.pop_front();
  }
  std::size_t size() const { return hist_.size(); }
  int fallbacks() const { return fallbacks_; }
  const Vec &last_coefficients() const { return coef_; }

  std::array<Mat, 2> extrapolate() {
    const int m = static_cast<int>(hist_.size());
    if (m == 0) throw NumericalError("DIIS extrapolation with empty history");
    if (m == 1) {
      coef_ = Vec::Ones(1);
      return hist_.back().F;
    }
    Mat B(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j)
        B(i, j) = B(j, i) = hist_[i].err[0].cwiseProduct(hist_[j].err[0]).sum() +
                            hist_[i].err[1].cwiseProduct(hist_[j].err[1]).sum();
    Eigen::JacobiSVD<Mat> svd(B);
    const Vec sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[0] > kDiisConditionLimit * sv[m - 1]) {
      ++fallbacks_;
      auto last = hist_.back();
      hist_.clear();
      hist_.push_back(last);
      coef_ = Vec::Ones(1);
      return last.F;
    }
    Mat A = Mat::Zero(m + 1, m + 1);
    A.topLeftCorner(m, m) = B;
    A.row(m).head(m).setConstant(-1.0);
    A.col(m).head(m).setConstant(-1.0);
    Vec rhs = Vec::Zero(m + 1);
    rhs[m] = -1.0;
    const Vec x = A.colPivHouseholderQr().solve(rhs);
    coef_ = x.head(m);
    std::array<Mat, 2> F{Mat::Zero(hist_[0].F[0].rows(), hist_[0].F[0].cols()),
                         Mat::Zero(hist_[0].F[0].rows(), hist_[0].F[0].cols())};
    for (int i = 0; i < m; ++i)
      for (int s = 0; s < 2; ++s) F[s] += coef_[i] * hist_[i].F[s];
    return F;
  }

 private:
  struct Item {
    std::array<Mat, 2> F, err;
  };
  int depth_;
  std::deque<Item> hist_;
  int fallbacks_ = 0;
  Vec coef_;
};

struct SCFSolution {
  std::array<Mat, 2> P, C;
  std::array<Vec, 2> eps;
  std::array<std::vector<int>, 2> occ;  // occupied MO indices per spin
  std::array<Mat, 2> F;                 // Fock matrices at the final density
  double e_total = 0.0, e_kin = 0.0, e_el = 0.0, e_xc = 0.0, e_nuc = 0.0, e_coulomb = 0.0;
  bool converged = false;
  bool restricted = true;
  int iterations = 0;
  int diis_fallbacks = 0;
  double commutator_norm = 0.0;
  std::vector<double> energy_history;
  std::vector<std::string> warnings;
  SCFOptions options;

  Mat P_total() const { return P[0] + P[1]; }
};

namespace detail {

struct Diagonalized {
  Mat C;
  Vec eps;
};

inline Diagonalized diagonalize(const Mat &F, const Mat &X) {
  const Mat Fp = X.transpose() * F * X;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Fp + Fp.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("Fock eigendecomposition failed");
  return {X * es.eigenvectors(), es.eigenvalues()};
}

inline std::vector<int> choose_occupation(const Vec &eps, int n, const std::vector<int> &forced,
                                          const char *label) {
  const int nmo = static_cast<int>(eps.size());
  if (n > nmo)
    throw InputError(std::string(label) + " channel has " + std::to_string(n) + " electrons but only " +
                     std::to_string(nmo) + " orbitals");
  if (!forced.empty()) {
    if (static_cast<int>(forced.size()) != n)
      throw InputError(std::string(label) + " occupation list has " + std::to_string(forced.size()) +
                       " entries, expected " + std::to_string(n));
    for (int i : forced)
      if (i < 0 || i >= nmo) throw InputError("occupation index out of range");
    return forced;
  }
  if (n > 0 && n < nmo && eps[n] - eps[n - 1] < kDegenerateGap)
    throw NumericalError(std::string(label) + " frontier orbitals are degenerate (HOMO " +
                         std::to_string(eps[n - 1]) + ", LUMO " + std::to_string(eps[n]) +
                         "); supply an explicit occupation list");
  std::vector<int> occ(n);
  for (int i = 0; i < n; ++i) occ[i] = i;
  return occ;
}

inline Mat density_from(const Mat &C, const std::vector<int> &occ) {
  Mat P = Mat::Zero(C.rows(), C.rows());
  for (int i : occ) P.noalias() += C.col(i) * C.col(i).transpose();
  return P;
}

}  // namespace detail

// Orthogonal-basis commutator X^T (F P S - S P F) X.
inline Mat commutator_error(const Mat &F, const Mat &P, const Mat &S, const Mat &X) {
  const Mat FPS = F * P * S;
  return X.transpose() * (FPS - FPS.transpose()) * X;
}

inline void fill_energies(SCFSolution &sol, const SCFSystem &sys, const FockResult &fr) {
  const Mat P = sol.P_total();
  sol.e_kin = P.cwiseProduct(sys.ints.T).sum();
  sol.e_coulomb = fr.e_coulomb;
  sol.e_el = P.cwiseProduct(sys.ints.V).sum() + fr.e_coulomb;
  sol.e_xc = fr.e_xc;
  sol.e_nuc = sys.e_nuc;
  sol.e_total = sol.e_kin + sol.e_el + sol.e_xc + sol.e_nuc;
}

inline SCFSolution scf_solve(const SCFSystem &sys, const HybridXC &h, const SCFOptions &opts = {}) {
  opts.validate();
  h.validate();
  SCFSolution sol;
  sol.options = opts;
  const int n_up = sys.mol.n_up(), n_dn = sys.mol.n_dn();
  sol.restricted = opts.restricted.value_or(sys.mol.spin == 0);
  if (sol.restricted && n_up != n_dn) throw InputError("restricted SCF needs equal spin populations");
  if (sys.orth.canonical)
    sol.warnings.push_back("near-linear dependence: dropped " + std::to_string(sys.orth.dropped) +
                           " overlap eigenvector(s) below " + std::to_string(kLinearDependenceTol));
  const Mat &S = sys.ints.S;
  const Mat &X = sys.orth.X;
  const int n[2] = {n_up, n_dn};
  const std::vector<int> *forced[2] = {&opts.occ_up, &opts.occ_dn};

  auto occupy = [&](const std::array<Mat, 2> &F) {
    for (int s = 0; s < 2; ++s) {
      if (s == 1 && sol.restricted) {
        sol.C[1] = sol.C[0];
        sol.eps[1] = sol.eps[0];
        sol.occ[1] = sol.occ[0];
        sol.P[1] = sol.P[0];
        break;
      }
      auto d = detail::diagonalize(F[s], X);
      sol.occ[s] = detail::choose_occupation(d.eps, n[s], *forced[s], s == 0 ? "alpha" : "beta");
      sol.C[s] = std::move(d.C);
      sol.eps[s] = std::move(d.eps);
      sol.P[s] = detail::density_from(sol.C[s], sol.occ[s]);
    }
  };

  const Mat H = sys.ints.core();
  if (n_up + n_dn == 0) {
    occupy({H, H});
    sol.F = {H, H};
    sol.e_nuc = sys.e_nuc;
    sol.e_total = sys.e_nuc;
    sol.converged = true;
    return sol;
  }

  occupy({H, H});
  Diis diis(opts.diis_depth);
  double e_prev = 0.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    FockResult fr = build_fock(sys, sol.P[0], sol.P[1], h);
    if (sol.restricted) fr.F[1] = fr.F[0];
    fill_energies(sol, sys, fr);
    if (!std::isfinite(sol.e_total)) throw NumericalError("non-finite energy at SCF iteration " + std::to_string(it));
    sol.energy_history.push_back(sol.e_total);
    std::array<Mat, 2> err = {commutator_error(fr.F[0], sol.P[0], S, X), commutator_error(fr.F[1], sol.P[1], S, X)};
    sol.commutator_norm = std::max(err[0].cwiseAbs().maxCoeff(), err[1].cwiseAbs().maxCoeff());
    sol.iterations = it;
    sol.F = fr.F;
    if (it > 1 && std::abs(sol.e_total - e_prev) <= opts.energy_tol && sol.commutator_norm <= opts.diis_tol) {
      sol.converged = true;
      break;
    }
    e_prev = sol.e_total;
    diis.push(fr.F, err);
    occupy(diis.extrapolate());
  }
  sol.diis_fallbacks = diis.fallbacks();
  // Final orbitals from the un-extrapolated Fock matrix at the final density;
  // P, energies and occupations stay those of the last evaluated density.
  for (int s = 0; s < 2; ++s) {
    if (s == 1 && sol.restricted) {
      sol.C[1] = sol.C[0];
      sol.eps[1] = sol.eps[0];
      break;
    }
    auto d = detail::diagonalize(sol.F[s], X);
    sol.C[s] = std::move(d.C);
    sol.eps[s] = std::move(d.eps);
  }
  return sol;
}

inline SCFSolution scf_solve(const Molecule &mol, const std::string &basis, const HybridXC &h,
                             const SCFOptions &opts = {}) {
  const auto sys = build_system(mol, basis, opts.grid_level, h.needs_grid());
  return scf_solve(sys, h, opts);
}

inline nlohmann::json options_json(const SCFOptions &o) {
  nlohmann::json j = {{"max_iterations", o.max_iterations}, {"energy_tol", o.energy_tol},
                      {"diis_tol", o.diis_tol},             {"diis_depth", o.diis_depth},
                      {"grid_level", o.grid_level}};
  j["restricted"] = o.restricted ? nlohmann::json(*o.restricted) : nlohmann::json("auto");
  if (!o.occ_up.empty()) j["occ_up"] = o.occ_up;
  if (!o.occ_dn.empty()) j["occ_dn"] = o.occ_dn;
  return j;
}

inline nlohmann::json solution_json(const SCFSolution &s) {
  return {{"e_total", s.e_total},
          {"e_kin", s.e_kin},
          {"e_el", s.e_el},
          {"e_coulomb", s.e_coulomb},
          {"e_xc", s.e_xc},
          {"e_nuc", s.e_nuc},
          {"converged", s.converged},
          {"restricted", s.restricted},
          {"iterations", s.iterations},
          {"diis_fallbacks", s.diis_fallbacks},
          {"commutator_norm", s.commutator_norm},
          {"energy_history", s.energy_history},
          {"warnings", s.warnings},
          {"options", options_json(s.options)}};
}

}  // namespace diffks
