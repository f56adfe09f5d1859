#include <Eigen/Geometry>
#include <catch_amalgamated.hpp>
#include <random>

#include "diffks/scf.hpp"
#include "test_support.hpp"

using namespace diffks;

namespace {

const nlohmann::json &energies() {
  static const auto j = testing::load_fixture("energies.json");
  return j;
}

double ref(const std::string &method, const std::string &key) { return energies()[method][key].get<double>(); }

SCFSolution run(const std::string &desc, const std::string &basis, const std::string &xc, int charge = 0,
                int spin = 0, SCFOptions opts = {}) {
  return scf_solve(make_molecule(desc, charge, spin), basis, make_functional(xc), opts);
}

}  // namespace

TEST_CASE("orthogonalizer", "[scf]") {
  const Mat I = Mat::Identity(3, 3);
  CHECK(orthogonalizer(I).X == I);
  const auto mol = make_molecule("O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11");
  const auto ints = one_electron(load_basis("6-31g", mol), mol);
  const auto o = orthogonalizer(ints.S);
  CHECK_FALSE(o.canonical);
  CHECK((o.X.transpose() * ints.S * o.X - Mat::Identity(o.X.cols(), o.X.cols())).cwiseAbs().maxCoeff() <= 1e-12);

  const auto close = make_molecule("H 0 0 0; H 0 0 1e-4");
  const auto sc = one_electron(load_basis("sto-3g", close), close).S;
  const auto oc = orthogonalizer(sc);
  CHECK(oc.canonical);
  CHECK(oc.X.cols() == 1);
  CHECK((oc.X.transpose() * sc * oc.X - Mat::Identity(1, 1)).cwiseAbs().maxCoeff() <= 1e-10);
  Mat bad = I;
  bad(2, 2) = -1.0;
  CHECK_THROWS_AS(orthogonalizer(bad), NumericalError);

  const auto sol = scf_solve(close, "sto-3g", make_functional("hf"));
  REQUIRE(sol.converged);
  CHECK_FALSE(sol.warnings.empty());
}

TEST_CASE("Fock matrix basics", "[scf]") {
  const auto mol = make_molecule("H 0 0 0; H 0 0 1.4");
  const auto sys = build_system(mol, "sto-3g", 2, true);
  const Mat Z = Mat::Zero(2, 2);
  for (const std::string xc : {"hf", "lda", "pbe"}) {
    const auto fr = build_fock(sys, Z, Z, make_functional(xc));
    CHECK((fr.F[0] - sys.ints.core()).cwiseAbs().maxCoeff() == 0.0);
  }
  const auto sol = scf_solve(sys, make_functional("lda"));
  const auto fr = build_fock(sys, sol.P[0], sol.P[1], make_functional("lda"));
  CHECK(fr.F[0] == fr.F[0].transpose());
}

TEST_CASE("He HF Fock matrix matches reference", "[scf]") {
  const auto sol = run("He 0 0 0", "sto-3g", "hf");
  const Mat ref_f = testing::fixture_matrix(energies()["hf_fock_He"], 1);
  CHECK(std::abs(sol.F[0](0, 0) - ref_f(0, 0)) <= 1e-8);
}

TEST_CASE("HF energies match reference", "[scf]") {
  CHECK(std::abs(run("H 0 0 0", "sto-3g", "hf", 0, 1).e_total - ref("hf", "H")) <= 1e-8);
  CHECK(std::abs(run("He 0 0 0", "sto-3g", "hf").e_total - ref("hf", "He")) <= 1e-8);
  CHECK(std::abs(run("H 0 0 0; H 0 0 1.4", "sto-3g", "hf").e_total - ref("hf", "H2_1.4")) <= 1e-8);
  CHECK(std::abs(run("He 0 0 0", "sto-3g", "hf", 1, 1).e_total - ref("hf", "He+")) <= 1e-8);
  CHECK(std::abs(run("He 0 0 0", "6-31g", "hf").e_total - ref("hf_631g", "He")) <= 1e-8);
  CHECK(std::abs(run("H 0 0 0; H 0 0 1.4", "6-31g", "hf").e_total - ref("hf_631g", "H2_1.4")) <= 1e-8);
  CHECK(std::abs(run("Li 0 0 0; H 0 0 3.0", "6-31g", "hf").e_total - ref("hf_631g", "LiH_3.0")) <= 1e-8);
}

TEST_CASE("DFT energies match reference at level 3", "[scf]") {
  CHECK(std::abs(run("H 0 0 0", "sto-3g", "lda", 0, 1).e_total - ref("lda", "H")) <= 1e-5);
  CHECK(std::abs(run("He 0 0 0", "sto-3g", "lda").e_total - ref("lda", "He")) <= 1e-5);
  CHECK(std::abs(run("H 0 0 0; H 0 0 1.4", "sto-3g", "lda").e_total - ref("lda", "H2_1.4")) <= 1e-5);
  CHECK(std::abs(run("H 0 0 0", "sto-3g", "pbe", 0, 1).e_total - ref("pbe", "H")) <= 1e-5);
  CHECK(std::abs(run("He 0 0 0", "sto-3g", "pbe").e_total - ref("pbe", "He")) <= 1e-5);
  CHECK(std::abs(run("H 0 0 0; H 0 0 1.4", "sto-3g", "pbe").e_total - ref("pbe", "H2_1.4")) <= 1e-5);
  CHECK(std::abs(run("O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11", "6-31g", "lda").e_total - ref("lda_631g", "H2O")) <=
        1e-5);
}

TEST_CASE("converged density invariants", "[scf]") {
  struct Case {
    const char *desc;
    int charge, spin;
    const char *xc;
  };
  for (const auto &c : {Case{"Li 0 0 0; H 0 0 3.0", 0, 0, "lda"}, Case{"Li 0 0 0", 0, 1, "pbe"},
                        Case{"He 0 0 0; H 0 0 1.4632", 1, 0, "hf"}}) {
    CAPTURE(c.desc, c.xc);
    const auto mol = make_molecule(c.desc, c.charge, c.spin);
    const auto sys = build_system(mol, "6-31g", 2, true);
    const auto sol = scf_solve(sys, make_functional(c.xc));
    REQUIRE(sol.converged);
    const Mat &S = sys.ints.S;
    CHECK(std::abs((sol.P[0] * S).trace() - mol.n_up()) <= 1e-10);
    CHECK(std::abs((sol.P[1] * S).trace() - mol.n_dn()) <= 1e-10);
    for (int s = 0; s < 2; ++s) {
      CHECK(sol.P[s] == sol.P[s].transpose());
      CHECK((sol.P[s] * S * sol.P[s] - sol.P[s]).cwiseAbs().maxCoeff() <= 1e-8);
    }
    CHECK(std::abs(sol.energy_history.back() - sol.energy_history[sol.energy_history.size() - 2]) <= 1e-8);
    CHECK(sol.restricted == (c.spin == 0));
    if (sol.restricted) {
      CHECK(sol.P[0] == sol.P[1]);
      const Mat Pt = sol.P_total();
      CHECK((Pt * S * Pt - 2.0 * Pt).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("untrained hybrid equals its baseline", "[scf]") {
  const auto mol = make_molecule("H 0 0 0; H 0 0 1.4");
  const auto sys = build_system(mol, "sto-3g", 3, true);
  CHECK(scf_solve(sys, make_functional("nnlda", 3)).e_total == scf_solve(sys, make_functional("lda")).e_total);
  CHECK(scf_solve(sys, make_functional("nnpbe", 3)).e_total == scf_solve(sys, make_functional("pbe")).e_total);
}

TEST_CASE("DIIS extrapolation", "[scf]") {
  Diis d(8);
  const std::array<Mat, 2> F{Mat::Constant(2, 2, 1.5), Mat::Constant(2, 2, -0.5)};
  d.push(F, {Mat::Identity(2, 2), Mat::Zero(2, 2)});
  CHECK(d.extrapolate()[0] == F[0]);
  std::array<Mat, 2> e2{Mat::Zero(2, 2), Mat::Zero(2, 2)};
  e2[0] << 0.2, 0.1, 0.1, -0.3;
  d.push({F[0] * 2.0, F[1]}, e2);
  d.extrapolate();
  CHECK(std::abs(d.last_coefficients().sum() - 1.0) <= 1e-12);
  CHECK(d.fallbacks() == 0);
  d.push(F, e2);  // exact duplicate error: singular B
  CHECK(d.extrapolate()[0] == F[0]);
  CHECK(d.fallbacks() == 1);
}

TEST_CASE("special cases", "[scf]") {
  const auto hp = run("H 0 0 0", "sto-3g", "lda", 1, 0);
  CHECK(hp.converged);
  CHECK(hp.e_total == 0.0);
  CHECK(hp.iterations == 0);
  const auto h2p = run("H 0 0 0; H 0 0 2.0", "sto-3g", "hf", 2, 0);
  CHECK(h2p.e_total == 0.5);

  // p-shell degeneracy in the core guess
  CHECK_THROWS_AS(run("C 0 0 0", "sto-3g", "hf", 0, 2), NumericalError);
  SCFOptions o;
  o.occ_up = {0, 1, 2, 3};
  o.occ_dn = {0, 1};
  o.max_iterations = 200;
  const auto c = run("C 0 0 0", "sto-3g", "hf", 0, 2, o);
  CHECK(c.converged);

  SCFOptions one;
  one.max_iterations = 1;
  CHECK_FALSE(run("Li 0 0 0; H 0 0 3.0", "6-31g", "hf", 0, 0, one).converged);
  SCFOptions bad;
  bad.energy_tol = 0.0;
  CHECK_THROWS_AS(run("He 0 0 0", "sto-3g", "hf", 0, 0, bad), InputError);
  SCFOptions r;
  r.restricted = true;
  CHECK_THROWS_AS(run("H 0 0 0", "sto-3g", "hf", 0, 1, r), InputError);
  CHECK_THROWS_AS(run("He 0 0 0", "sto-3g", "hf", -2, 0), InputError);  // 4 electrons, 1 orbital
}

TEST_CASE("rigid-motion invariance of total energies", "[scf]") {
  const auto mol = make_molecule("O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11");
  SCFOptions o;
  o.grid_level = 2;
  o.energy_tol = 1e-10;
  const auto e0 = scf_solve(mol, "6-31g", make_functional("pbe"), o).e_total;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int k = 0; k < 2; ++k) {
    Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
    q.normalize();
    Molecule m = mol;
    for (auto &a : m.atoms) a.position = q * a.position + Vec3(1.0, -2.0, 0.5);
    CHECK(std::abs(scf_solve(m, "6-31g", make_functional("pbe"), o).e_total - e0) <= 1e-8);
  }
}

TEST_CASE("solution JSON", "[scf]") {
  const auto j = solution_json(run("He 0 0 0", "sto-3g", "hf"));
  for (const char *k : {"e_total", "e_kin", "e_el", "e_xc", "e_nuc", "converged", "iterations", "options"})
    CHECK(j.contains(k));
  CHECK(j["options"]["grid_level"] == 3);
  CHECK(j["options"]["restricted"] == "auto");
}
