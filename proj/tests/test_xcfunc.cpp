#include <Eigen/Eigenvalues>
#include <catch_amalgamated.hpp>
#include <random>

#include "diffks/integrals.hpp"
#include "diffks/xcfunc.hpp"

using namespace diffks;

namespace {

struct Setup {
  Molecule mol;
  AOBasis basis;
  MolGrid grid;
  AOValues ao;
  Mat P_up, P_dn;
};

// Spin-polarized test densities from core-Hamiltonian orbitals of LiH/6-31G.
Setup make_setup(int level = 1) {
  Setup s;
  s.mol = make_molecule("Li 0 0 0; H 0 0 3.0");
  s.basis = load_basis("6-31g", s.mol);
  s.grid = build_grid(s.mol, level);
  s.ao = eval_ao(s.basis, s.grid);
  const auto ints = one_electron(s.basis, s.mol);
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(ints.T + ints.V, ints.S);
  const Mat &C = es.eigenvectors();
  // A small full-rank part keeps |dn / n| bounded in the tails, so finite
  // differences never step across the density floor.
  const Mat bg = 0.02 * C * C.transpose();
  s.P_up = C.col(0) * C.col(0).transpose() + C.col(1) * C.col(1).transpose() + bg;
  s.P_dn = C.col(0) * C.col(0).transpose() + 0.6 * C.col(2) * C.col(2).transpose() + bg;
  return s;
}

Mat sym_direction(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat D(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) D(i, j) = D(j, i) = 0.01 * u(rng);
  return D;
}

HybridXC random_hybrid(const std::string &name, double beta) {
  auto h = make_functional(name, 17);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto &p : h.nn.params) p += u(rng);
  h.alpha = 0.9;
  h.beta = beta;
  return h;
}

// Fourth-order central difference.
template <class F>
auto fd4(F f, double t) {
  return (8.0 * (f(t) - f(-t)) - (f(2 * t) - f(-2 * t))) / (12.0 * t);
}

double exc_of(const Setup &s, const HybridXC &h, const Mat &Pu, const Mat &Pd) {
  return hybrid_exc(density_on_grid(Pu, Pd, s.ao), s.grid, h).e_xc;
}

}  // namespace

TEST_CASE("functional names", "[xcfunc]") {
  CHECK(make_functional("lda").baseline == BaselineKind::lda_xc);
  CHECK(make_functional("pbe").is_gga());
  CHECK(make_functional("hf").exact_exchange());
  CHECK(make_functional("nnlda").nn.layer_sizes == std::vector<int>{2, 32, 32, 1});
  CHECK(make_functional("nnpbe").nn.layer_sizes == std::vector<int>{3, 32, 32, 1});
  CHECK(make_functional("nnpbe").alpha == 1.0);
  CHECK(make_functional("nnpbe").beta == 0.0);
  CHECK_THROWS_AS(make_functional("b3lyp"), InputError);
  auto h = make_functional("nnlda");
  h.nn = init_network({3, 4, 1}, Activation::silu, 0);
  CHECK_THROWS_AS(h.validate(), InputError);
}

TEST_CASE("Slater exchange closed form at unit density", "[xcfunc]") {
  CHECK(std::abs(xc::slater_exchange(0.5, 0.5) + 0.7385587663) < 1e-10);
}

TEST_CASE("hybrid reductions and linearity", "[xcfunc]") {
  const auto s = make_setup();
  const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
  for (const std::string name : {"nnlda", "nnpbe"}) {
    const auto base = make_functional(name == "nnlda" ? "lda" : "pbe");
    const double eb = hybrid_exc(d, s.grid, base).e_xc;
    auto h = random_hybrid(name, 0.0);
    h.alpha = 1.3;
    CHECK(hybrid_exc(d, s.grid, h).e_xc == 1.3 * eb);

    auto z = make_functional(name);
    std::fill(z.nn.params.begin(), z.nn.params.end(), 0.0);
    z.beta = 1.0;
    CHECK(std::abs(hybrid_exc(d, s.grid, z).e_xc - eb) <= 1e-12 * std::abs(eb));

    h.alpha = 0.7;
    h.beta = 0.4;
    const auto r = hybrid_exc(d, s.grid, h);
    CHECK(std::abs(r.e_xc - (0.7 * r.e_baseline + 0.4 * r.e_network)) < 1e-12);
    h.beta = 0.8;
    const auto r2 = hybrid_exc(d, s.grid, h);
    CHECK(std::abs(r2.e_xc - (0.7 * r.e_baseline + 0.8 * r.e_network)) < 1e-11);
  }
}

TEST_CASE("neural features and input derivatives", "[xcfunc]") {
  const auto s = make_setup();
  const auto closed = density_on_grid(s.P_up, s.P_up, s.ao);
  const auto h = random_hybrid("nnpbe", 0.5);
  const auto t = neural_term(closed, h.nn, h.features);
  CHECK(t.features.col(1).cwiseAbs().maxCoeff() == 0.0);

  auto zero = h;
  std::fill(zero.nn.params.begin(), zero.nn.params.end(), 0.0);
  CHECK(neural_term(closed, zero.nn, zero.features).f.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(neural_term(closed, h.nn, FeatureSpec::lda), InputError);

  const double eps = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < t.f.size(); i += 97) {
    for (int k = 0; k < 3; ++k) {
      const double fd = fd4(
          [&](double e) {
            double x[3];
            for (int j = 0; j < 3; ++j) x[j] = t.features(i, j);
            x[k] += e;
            return forward(h.nn, x);
          },
          eps);
      worst = std::max(worst, std::abs(t.df(i, k) - fd) / std::max(std::abs(fd), 1e-6));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("chain-rule potentials match dual-number potentials", "[xcfunc]") {
  const auto s = make_setup();
  const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
  for (const std::string name : {"lda", "pbe", "nnlda", "nnpbe"}) {
    CAPTURE(name);
    const auto h = name.substr(0, 2) == "nn" ? random_hybrid(name, 0.6) : make_functional(name);
    const auto a = hybrid_exc(d, s.grid, h);
    const auto b = hybrid_exc_dual(d, s.grid, h);
    CHECK(std::abs(a.e_xc - b.e_xc) <= 1e-12 * std::abs(a.e_xc));
    auto agree = [](const Vec &x, const Vec &y) {
      return (x - y).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, y.cwiseAbs().maxCoeff());
    };
    CHECK(agree(a.v_up, b.v_up));
    CHECK(agree(a.v_dn, b.v_dn));
    if (h.is_gga()) {
      // compare the assembled matrices; raw vsigma blows up in the far tails
      const auto Va = vxc_matrix(a, d, s.ao, s.grid);
      const auto Vb = vxc_matrix(b, d, s.ao, s.grid);
      CHECK((Va[0] - Vb[0]).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((Va[1] - Vb[1]).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("spin swap symmetry", "[xcfunc]") {
  const auto s = make_setup();
  const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
  const auto ds = density_on_grid(s.P_dn, s.P_up, s.ao);
  for (const std::string name : {"lda", "pbe", "nnlda", "nnpbe"}) {
    const auto h = name.substr(0, 2) == "nn" ? random_hybrid(name, 0.6) : make_functional(name);
    const auto a = hybrid_exc(d, s.grid, h);
    const auto b = hybrid_exc(ds, s.grid, h);
    CHECK(std::abs(a.e_xc - b.e_xc) <= 1e-12 * std::abs(a.e_xc));
    CHECK((a.v_up - b.v_dn).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("XC matrix is symmetric and consistent with the energy", "[xcfunc]") {
  const auto s = make_setup();
  const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
  const int n = s.basis.ao_count();
  {
    XCResult z = hybrid_exc(d, s.grid, make_functional("lda"));
    z.v_up.setZero();
    z.v_dn.setZero();
    CHECK(vxc_matrix(z, d, s.ao, s.grid)[0].cwiseAbs().maxCoeff() == 0.0);
  }
  for (const std::string name : {"lda", "pbe", "nnlda", "nnpbe"}) {
    CAPTURE(name);
    const auto h = name.substr(0, 2) == "nn" ? random_hybrid(name, 0.6) : make_functional(name);
    const auto xc = hybrid_exc(d, s.grid, h);
    const auto V = vxc_matrix(xc, d, s.ao, s.grid);
    CHECK(V[0] == V[0].transpose());
    CHECK(V[1] == V[1].transpose());
    const Mat Du = sym_direction(n, 1), Dd = sym_direction(n, 2);
    const double an = (Du.cwiseProduct(V[0])).sum() + (Dd.cwiseProduct(V[1])).sum();
    const double fd = fd4([&](double t) { return exc_of(s, h, s.P_up + t * Du, s.P_dn + t * Dd); }, 1e-4);
    CHECK(std::abs(an - fd) <= 1e-6 * std::abs(fd));
  }
}

TEST_CASE("single density-matrix element potential check", "[xcfunc]") {
  const auto s = make_setup();
  const auto h = random_hybrid("nnlda", 0.5);
  const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
  const auto V = vxc_matrix(hybrid_exc(d, s.grid, h), d, s.ao, s.grid);
  const int n = s.basis.ao_count();
  Mat E = Mat::Zero(n, n);
  E(0, 1) = E(1, 0) = 1.0;
  const double fd = fd4([&](double t) { return exc_of(s, h, s.P_up + t * E, s.P_dn); }, 1e-4);
  CHECK(std::abs(2.0 * V[0](0, 1) - fd) <= 1e-6 * std::abs(fd));
}

TEST_CASE("kernel product matches finite difference of V_xc", "[xcfunc]") {
  const auto s = make_setup();
  const int n = s.basis.ao_count();
  const Mat Du = sym_direction(n, 3), Dd = sym_direction(n, 4);
  for (const std::string name : {"lda", "pbe", "nnlda", "nnpbe"}) {
    CAPTURE(name);
    const auto h = name.substr(0, 2) == "nn" ? random_hybrid(name, 0.6) : make_functional(name);
    const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
    const auto K = build_kernel(d, h);
    const auto dd = density_perturbation(Du, Dd, s.ao, d);
    const auto dV = apply_kernel(K, d, dd, s.ao, s.grid);
    auto V_at = [&](double t) {
      const auto dt = density_on_grid(s.P_up + t * Du, s.P_dn + t * Dd, s.ao);
      return vxc_matrix(hybrid_exc(dt, s.grid, h), dt, s.ao, s.grid);
    };
    const double t = 1e-4;
    const auto Vp = V_at(t), Vm = V_at(-t), Vp2 = V_at(2 * t), Vm2 = V_at(-2 * t);
    for (int sp = 0; sp < 2; ++sp) {
      const Mat fd = (8.0 * (Vp[sp] - Vm[sp]) - (Vp2[sp] - Vm2[sp])) / (12.0 * t);
      CHECK((dV[sp] - fd).cwiseAbs().maxCoeff() <= 1e-5 * fd.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("parameter gradients of E_xc", "[xcfunc]") {
  const auto s = make_setup();
  const auto d = density_on_grid(s.P_up, s.P_dn, s.ao);
  const int n = s.basis.ao_count();
  for (const std::string name : {"nnlda", "nnpbe"}) {
    CAPTURE(name);
    auto h = random_hybrid(name, 0.6);
    const auto g = xc_param_grad(d, s.grid, h);
    const auto r = hybrid_exc(d, s.grid, h);
    CHECK(g.d_alpha == Catch::Approx(r.e_baseline).epsilon(1e-12));
    CHECK(g.d_beta == Catch::Approx(r.e_network).epsilon(1e-12));
    const double t = 1e-4;
    for (std::size_t k = 0; k < h.nn.params.size(); k += 53) {
      const double fd = fd4(
          [&](double e) {
            auto hh = h;
            hh.nn.params[k] += e;
            return hybrid_exc(d, s.grid, hh).e_xc;
          },
          t);
      CHECK(std::abs(g.d_params[k] - fd) <= std::max(1e-6 * std::abs(fd), 1e-10));
    }

    // d/dtheta <dP, V_xc(theta)>
    const Mat Du = sym_direction(n, 5), Dd = sym_direction(n, 6);
    const auto dd = density_perturbation(Du, Dd, s.ao, d);
    const auto gd = xc_param_grad_directional(d, dd, s.grid, h);
    auto proj = [&](const HybridXC &hh) {
      const auto V = vxc_matrix(hybrid_exc(d, s.grid, hh), d, s.ao, s.grid);
      return Du.cwiseProduct(V[0]).sum() + Dd.cwiseProduct(V[1]).sum();
    };
    const double fa = fd4(
        [&](double e) {
          auto hh = h;
          hh.alpha += e;
          return proj(hh);
        },
        t);
    CHECK(std::abs(gd.d_alpha - fa) <= 1e-6 * std::abs(fa));
    for (std::size_t k = 0; k < h.nn.params.size(); k += 53) {
      const double fd = fd4(
          [&](double e) {
            auto hh = h;
            hh.nn.params[k] += e;
            return proj(hh);
          },
          t);
      CHECK(std::abs(gd.d_params[k] - fd) <= std::max(1e-6 * std::abs(fd), 1e-10));
    }
  }
}
