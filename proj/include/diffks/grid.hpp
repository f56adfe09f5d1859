#pragma once

// Molecular quadrature: Gauss-Chebyshev radial x Lebedev angular per atom,
// Becke fuzzy-cell partitioning, and AO / density evaluation on the points.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "diffks/basis.hpp"
#include "diffks/embedded_data.hpp"
#include "diffks/error.hpp"
#include "diffks/geometry.hpp"
#include "diffks/parallel.hpp"

namespace diffks {

inline constexpr double kDensityFloor = 1e-12;
inline constexpr int kDefaultGridLevel = 3;

struct GridLevelSpec {
  int radial;
  int angular;
};

inline GridLevelSpec grid_level_spec(int level) {
  static constexpr std::array<GridLevelSpec, 5> specs = {
      {{30, 26}, {40, 86}, {60, 194}, {75, 194}, {99, 194}}};
  if (level < 1 || level > 5)
    throw InputError("grid level must be in [1, 5], got " + std::to_string(level));
  return specs[level - 1];
}

// Bragg-Slater radii in Angstrom (H uses 0.35 rather than 0.25).
inline double bragg_radius_bohr(int z) {
  static constexpr std::array<double, kMaxZ + 1> radii = {
      0.0, 0.35, 1.40, 1.45, 1.05, 0.85, 0.70, 0.65, 0.60, 0.50,
      1.50, 1.80, 1.50, 1.25, 1.10, 1.00, 1.00, 1.00, 1.80};
  return radii.at(z) * kBohrPerAngstrom;
}

// Midpoint radius of the radial map r = R (1 + x) / (1 - x): the full Bragg
// radius for hydrogen, half of it otherwise.
inline double radial_scale(int z) {
  return z == 1 ? bragg_radius_bohr(1) : 0.5 * bragg_radius_bohr(z);
}

struct AngularPoint {
  Vec3 direction;
  double weight;  // sums to 1 over the set
};

// Parses a Lebedev table: one "x y z w" per line, '#' comments allowed.
inline std::vector<AngularPoint> parse_lebedev(std::string_view text) {
  std::vector<AngularPoint> pts;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double x, y, z, w;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z >> w)) throw InputError("malformed Lebedev line: " + line);
    pts.push_back({Vec3(x, y, z), w});
  }
  return pts;
}

inline const std::vector<AngularPoint> &lebedev_points(int order) {
  static const std::vector<AngularPoint> p26 = parse_lebedev(embedded::kLebedev026);
  static const std::vector<AngularPoint> p50 = parse_lebedev(embedded::kLebedev050);
  static const std::vector<AngularPoint> p86 = parse_lebedev(embedded::kLebedev086);
  static const std::vector<AngularPoint> p110 = parse_lebedev(embedded::kLebedev110);
  static const std::vector<AngularPoint> p194 = parse_lebedev(embedded::kLebedev194);
  switch (order) {
    case 26: return p26;
    case 50: return p50;
    case 86: return p86;
    case 110: return p110;
    case 194: return p194;
    default: throw InputError("no Lebedev table with " + std::to_string(order) + " points");
  }
}

// Polynomial degree integrated exactly by each shipped order.
inline int lebedev_degree(int order) {
  switch (order) {
    case 26: return 7;
    case 50: return 11;
    case 86: return 15;
    case 110: return 17;
    case 194: return 23;
    default: throw InputError("no Lebedev table with " + std::to_string(order) + " points");
  }
}

struct RadialPoint {
  double r;
  double weight;  // includes r^2 dr
};

// Gauss-Chebyshev (second kind) nodes mapped to [0, inf) with Becke's transform.
inline std::vector<RadialPoint> radial_grid(int n, double scale) {
  std::vector<RadialPoint> pts;
  pts.reserve(n);
  for (int i = 1; i <= n; ++i) {
    const double theta = i * M_PI / (n + 1);
    const double x = std::cos(theta);
    const double sin_t = std::sin(theta);
    // \int_{-1}^{1} g(x) dx ~ sum pi/(n+1) sin^2(theta) g(x) / sqrt(1 - x^2)
    const double wx = M_PI / (n + 1) * sin_t;
    const double r = scale * (1.0 + x) / (1.0 - x);
    const double drdx = 2.0 * scale / ((1.0 - x) * (1.0 - x));
    pts.push_back({r, wx * drdx * r * r});
  }
  return pts;
}

struct MolGrid {
  std::vector<Vec3> points;
  std::vector<double> weights;  // radial * 4pi * angular * Becke partition
  std::vector<int> owner;       // atom whose atomic grid produced the point
  int level = kDefaultGridLevel;

  std::size_t size() const { return points.size(); }
};

namespace detail {

inline double becke_step(double mu) {
  for (int k = 0; k < 3; ++k) mu = 1.5 * mu - 0.5 * mu * mu * mu;
  return 0.5 * (1.0 - mu);
}

}  // namespace detail

// Becke cell functions P_A(r) normalized over atoms; out[a] is atom a's share.
inline void becke_partition(const Molecule &mol, const Vec3 &r, std::vector<double> &out) {
  const std::size_t n = mol.atoms.size();
  out.assign(n, 1.0);
  if (n == 1) return;
  std::vector<double> dist(n);
  for (std::size_t a = 0; a < n; ++a) dist[a] = (r - mol.atoms[a].position).norm();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      const double rab = (mol.atoms[a].position - mol.atoms[b].position).norm();
      double mu = (dist[a] - dist[b]) / rab;
      // Atomic size adjustment.
      const double chi = bragg_radius_bohr(mol.atoms[a].atomic_number) /
                         bragg_radius_bohr(mol.atoms[b].atomic_number);
      if (chi != 1.0) {
        const double u = (chi - 1.0) / (chi + 1.0);
        double aab = u / (u * u - 1.0);
        aab = std::clamp(aab, -0.5, 0.5);
        mu += aab * (1.0 - mu * mu);
      }
      out[a] *= detail::becke_step(mu);
    }
  }
  double total = 0.0;
  for (double p : out) total += p;
  for (double &p : out) p /= total;
}

// Principal axes of the nuclear-charge second moment about the centre of
// charge. Angular grids are laid out in this frame so energies follow the
// molecule under rigid rotation. Lebedev sets are octahedrally symmetric, so
// the sign and ordering of the axes do not matter.
inline Eigen::Matrix3d standard_frame(const Molecule &mol) {
  if (mol.atoms.size() < 2) return Eigen::Matrix3d::Identity();
  Vec3 c = Vec3::Zero();
  double z = 0.0;
  for (const auto &a : mol.atoms) {
    c += a.atomic_number * a.position;
    z += a.atomic_number;
  }
  c /= z;
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  for (const auto &a : mol.atoms) {
    const Vec3 d = a.position - c;
    M += a.atomic_number * d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(M);
  Eigen::Matrix3d R = es.eigenvectors();
  if (R.determinant() < 0) R.col(0) = -R.col(0);
  return R;
}

inline MolGrid build_grid(const Molecule &mol, int level = kDefaultGridLevel) {
  const auto spec = grid_level_spec(level);
  const auto &lebedev = lebedev_points(spec.angular);
  const Eigen::Matrix3d R = standard_frame(mol);
  std::vector<AngularPoint> angular;
  for (const auto &ap : lebedev) angular.push_back({R * ap.direction, ap.weight});
  MolGrid grid;
  grid.level = level;
  std::vector<double> cell;
  for (std::size_t a = 0; a < mol.atoms.size(); ++a) {
    const auto &atom = mol.atoms[a];
    const auto radial = radial_grid(spec.radial, radial_scale(atom.atomic_number));
    for (const auto &rp : radial) {
      for (const auto &ap : angular) {
        const Vec3 p = atom.position + rp.r * ap.direction;
        becke_partition(mol, p, cell);
        grid.points.push_back(p);
        grid.weights.push_back(rp.weight * 4.0 * M_PI * ap.weight * cell[a]);
        grid.owner.push_back(static_cast<int>(a));
      }
    }
  }
  return grid;
}

// AO values and Cartesian gradients on the grid, stored point-major
// (rows = points, columns = AOs).
struct AOValues {
  Mat phi;
  std::array<Mat, 3> grad;
};

inline AOValues eval_ao(const AOBasis &basis, const MolGrid &grid) {
  const auto npts = static_cast<Eigen::Index>(grid.size());
  const int nao = basis.ao_count();
  AOValues out;
  out.phi = Mat::Zero(npts, nao);
  for (auto &g : out.grad) g = Mat::Zero(npts, nao);
  std::vector<std::vector<double>> coefs;
  for (const auto &s : basis.shells) coefs.push_back(s.primitive_coefficients());

  parallel_batches(grid.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (int mu = 0; mu < nao; ++mu) {
        const auto &f = basis.functions[mu];
        const auto &sh = basis.shells[f.shell];
        const Vec3 d = grid.points[i] - sh.center;
        const double r2 = d.squaredNorm();
        // radial part g(r^2) = sum c e^{-a r^2} and dg/dx_k = -2 a x_k (...)
        double rad = 0.0, drad = 0.0;
        for (std::size_t k = 0; k < sh.exponents.size(); ++k) {
          const double e = coefs[f.shell][k] * std::exp(-sh.exponents[k] * r2);
          rad += e;
          drad += -2.0 * sh.exponents[k] * e;
        }
        const int pw[3] = {f.powers.x, f.powers.y, f.powers.z};
        double mono = 1.0;
        for (int k = 0; k < 3; ++k) mono *= std::pow(d[k], pw[k]);
        out.phi(i, mu) = f.factor * mono * rad;
        for (int k = 0; k < 3; ++k) {
          double dmono = 0.0;
          if (pw[k] > 0) {
            dmono = pw[k] * std::pow(d[k], pw[k] - 1);
            for (int j = 0; j < 3; ++j)
              if (j != k) dmono *= std::pow(d[j], pw[j]);
          }
          out.grad[k](i, mu) = f.factor * (dmono * rad + mono * drad * d[k]);
        }
      }
    }
  });
  return out;
}

struct GridDensity {
  Vec n_up, n_dn;
  std::array<Vec, 3> grad_up, grad_dn;

  Vec total() const { return n_up + n_dn; }
  Eigen::Index size() const { return n_up.size(); }
};

namespace detail {

inline void density_channel(const Mat &P, const AOValues &ao, Vec &n, std::array<Vec, 3> &grad) {
  const Mat PhiP = ao.phi * P;  // (npts x nao)
  n = (PhiP.array() * ao.phi.array()).rowwise().sum();
  for (int k = 0; k < 3; ++k)
    grad[k] = 2.0 * (PhiP.array() * ao.grad[k].array()).rowwise().sum();
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    if (n[i] < kDensityFloor) {
      n[i] = 0.0;
      for (int k = 0; k < 3; ++k) grad[k][i] = 0.0;
    }
  }
}

}  // namespace detail

// n_s(r_i) = sum_{mu nu} P_s,mu nu phi_mu(r_i) phi_nu(r_i); values below 1e-12 are
// clamped to zero together with their gradients.
inline GridDensity density_on_grid(const Mat &P_up, const Mat &P_dn, const AOValues &ao) {
  const auto nao = ao.phi.cols();
  if (P_up.rows() != nao || P_up.cols() != nao || P_dn.rows() != nao || P_dn.cols() != nao)
    throw InputError("density matrix dimension does not match the AO count");
  GridDensity d;
  detail::density_channel(P_up, ao, d.n_up, d.grad_up);
  detail::density_channel(P_dn, ao, d.n_dn, d.grad_dn);
  return d;
}

inline double integrate(const MolGrid &grid, const Vec &values) {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += grid.weights[i] * values[i];
  return s;
}

}  // namespace diffks
