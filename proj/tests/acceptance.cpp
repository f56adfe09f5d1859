// Acceptance run: one PASS/FAIL line per criterion. Exit code 1 if any fails.
// Usage: acceptance [criterion numbers...]

#include <Eigen/Geometry>
#include <boost/math/special_functions/spherical_harmonic.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "diffks/diffks.hpp"
#include "test_support.hpp"

using namespace diffks;
using diffks::testing::fixture_matrix;
using diffks::testing::load_fixture;
using diffks::testing::max_abs;
namespace fs = std::filesystem;

namespace {

const std::string kData = DIFFKS_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2e", x);
  return b;
}

std::string fix(double x, int digits = 6) {
  char b[48];
  std::snprintf(b, sizeof b, "%.*f", digits, x);
  return b;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

HybridXC active_nnlda() {
  auto h = make_functional("nnlda", 0, Activation::softplus, {2, 8, 1});
  h.alpha = 0.95;
  h.beta = 0.3;
  return h;
}

// 1
Outcome integral_oracles() {
  double worst = 0.0;
  for (const char *tag : {"h2_sto3g", "he_sto3g", "heh+_sto3g"}) {
    const auto fx = load_fixture(std::string("integrals_") + tag + ".json");
    const auto mol = make_molecule(fx["moldesc"].get<std::string>(), fx["charge"], fx["spin"]);
    const auto basis = load_basis(fx["basis"], mol);
    const int n = fx["nao"];
    if (basis.ao_count() != n) return {false, std::string(tag) + ": AO count mismatch"};
    const auto ints = compute_integrals(basis, mol);
    worst = std::max({worst, max_abs(ints.S - fixture_matrix(fx["S"], n)), max_abs(ints.T - fixture_matrix(fx["T"], n)),
                      max_abs(ints.V - fixture_matrix(fx["V"], n))});
    const auto &g = ints.eri.data();
    if (g.size() != fx["ERI"].size()) return {false, std::string(tag) + ": ERI size mismatch"};
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] - fx["ERI"][i].get<double>()));
  }
  return {worst <= 1e-10, "S,T,V,ERI for H2, He, HeH+ max|diff| " + sci(worst)};
}

// 2
Outcome hf_energies() {
  const auto E = load_fixture("energies.json")["hf"];
  const auto hf = make_functional("hf");
  double worst = 0.0;
  std::string d;
  for (auto [desc, key, spin] : {std::tuple{"H 0 0 0", "H", 1}, {"He 0 0 0", "He", 0}, {"H 0 0 0; H 0 0 1.4", "H2_1.4", 0}}) {
    const auto sol = scf_solve(make_molecule(desc, 0, spin), "sto-3g", hf);
    if (!sol.converged) return {false, std::string(key) + " did not converge"};
    worst = std::max(worst, std::abs(sol.e_total - E[key].get<double>()));
    d += std::string(key) + " " + fix(sol.e_total) + "  ";
  }
  return {worst <= 1e-6, d + "max|diff| " + sci(worst)};
}

// 3
Outcome lda_energies() {
  const auto E = load_fixture("energies.json")["lda"];
  const auto lda = make_functional("lda");
  double worst = 0.0;
  std::string d;
  for (auto [desc, key] : {std::pair{"He 0 0 0", "He"}, {"H 0 0 0; H 0 0 1.4", "H2_1.4"}}) {
    SCFOptions o;
    o.grid_level = 3;
    const auto sol = scf_solve(make_molecule(desc), "sto-3g", lda, o);
    if (!sol.converged) return {false, std::string(key) + " did not converge"};
    worst = std::max(worst, std::abs(sol.e_total - E[key].get<double>()));
    d += std::string(key) + " " + fix(sol.e_total) + "  ";
  }
  return {worst <= 1e-5, d + "max|diff| " + sci(worst)};
}

// 4
Outcome grid_properties() {
  double pou = 0.0;
  std::vector<double> w;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (const char *desc : {"He 0 0 0", "H 0 0 0; H 0 0 1.4", "O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11"}) {
    const auto mol = make_molecule(desc);
    for (int k = 0; k < 5000; ++k) {
      becke_partition(mol, Vec3(u(rng), u(rng), u(rng)), w);
      double s = 0.0;
      for (double x : w) s += x;
      pou = std::max(pou, std::abs(s - 1.0));
    }
    for (const auto &p : build_grid(mol, 3).points) {
      becke_partition(mol, p, w);
      double s = 0.0;
      for (double x : w) s += x;
      pou = std::max(pou, std::abs(s - 1.0));
    }
  }

  double count = 0.0;
  for (const char *desc : {"He 0 0 0", "H 0 0 0; H 0 0 1.4"}) {
    const auto sys = build_system(make_molecule(desc), "sto-3g", 3, true);
    const auto sol = scf_solve(sys, make_functional("lda"));
    const auto d = density_on_grid(sol.P[0], sol.P[1], sys.ao);
    count = std::max(count, std::abs(integrate(sys.grid, d.total()) - sys.mol.electron_count()));
  }

  double sh = 0.0;
  for (int order : {26, 50, 86, 110, 194}) {
    const int deg = lebedev_degree(order);
    for (int l = 0; l <= deg; ++l)
      for (int m = -l; m <= l; ++m) {
        std::complex<double> s = 0.0;
        for (const auto &p : lebedev_points(order)) {
          const double theta = std::acos(std::clamp(p.direction.z(), -1.0, 1.0));
          const double phi = std::atan2(p.direction.y(), p.direction.x());
          s += p.weight * boost::math::spherical_harmonic(l, m, theta, phi);
        }
        // weights sum to 1: the mean of Y_lm over the sphere is delta_l0 / sqrt(4 pi)
        const double exact = l == 0 ? 1.0 / std::sqrt(4.0 * M_PI) : 0.0;
        sh = std::max(sh, std::abs(s - exact));
      }
  }
  return {pou <= 1e-12 && count <= 1e-6 && sh <= 1e-12,
          "partition of unity " + sci(pou) + ", |int n - N| " + sci(count) + ", Y_lm through degree " + sci(sh)};
}

// 5
Outcome untrained_reduction() {
  const auto lda = make_functional("lda");
  const auto nn = make_functional("nnlda", 0, Activation::softplus, {2, 8, 1});
  double worst = 0.0;
  for (auto [desc, q, s] : {std::tuple{"H 0 0 0", 0, 1}, {"H 0 0 0", 1, 0}, {"He 0 0 0", 0, 0}, {"He 0 0 0", 1, 1},
                            {"H 0 0 0; H 0 0 1.4", 0, 0}}) {
    const auto sys = build_system(make_molecule(desc, q, s), "sto-3g", 3, true);
    const auto a = scf_solve(sys, lda), b = scf_solve(sys, nn);
    if (!a.converged || !b.converged) return {false, std::string(desc) + " did not converge"};
    worst = std::max(worst, std::abs(a.e_total - b.e_total));
  }
  return {worst <= 1e-12, "NNLDA(alpha=1, beta=0) vs LDA on H, H+, He, He+, H2: max|dE| " + sci(worst) + " Ha"};
}

// 6
Outcome gradient_checks() {
  const auto smoke = load_dataset(kData + "/datasets/smoke.yaml");
  const auto dm = load_dataset(kData + "/datasets/h2_dm.yaml");
  const std::vector<std::pair<std::string, Entry>> losses = {{"IP(H)", smoke.entries[0]},
                                                             {"IP(He)", smoke.entries[1]},
                                                             {"AE(H2)", smoke.entries[2]},
                                                             // P is fixed by symmetry here: gradient is zero
                                                             {"DM(H2)", dm.entries[0]},
                                                             {"DM(H2/6-31G)", dm.entries[1]}};
  const auto h = active_nnlda();
  Engine engine(gradient_scf_options(3));
  const Vec theta = theta_of(h);
  double worst_fd = 0.0, worst_route = 0.0;
  std::string d;
  for (const auto &[name, entry] : losses) {
    const Dataset ds{{entry}, name};
    const Vec g = loss_and_grad(ds, h, engine).grad;
    const Vec fd = fd_gradient(
        [&](const Vec &t) {
          auto hh = h;
          set_theta(hh, t);
          return dataset_loss(ds, hh, engine);
        },
        theta, 1e-4);
    // |g - fd| <= 1e-4 |fd| + 1e-10 per component, i.e. relative error with an absolute floor
    double rel = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) rel = std::max(rel, std::abs(g[i] - fd[i]) / (std::abs(fd[i]) + 1e-6));
    worst_fd = std::max(worst_fd, rel);
    d += name + " " + sci(rel) + "  ";

    if (entry.is_energy()) {
      // same loss with each energy derivative taken through the adjoint solve (dE/dP = F)
      Vec adj = Vec::Zero(theta.size()), stat = Vec::Zero(theta.size());
      double pred = 0.0;
      for (std::size_t i = 0; i < entry.systems.size(); ++i) {
        const double sign = (entry.type == EntryType::ae) == (i > 0) ? 1.0 : -1.0;
        const auto &sys = engine.system(entry.systems[i], true);
        const auto sol = engine.solve(entry.systems[i], h);
        const Vec gs = energy_grad_stationary(sys, sol, h);
        pred += sign * sol.e_total;
        stat += sign * gs;
        adj += sign * implicit_grad(sys, sol, h, sol.F, &gs).grad;
      }
      const double r = 2.0 * entry.weight * (pred - *entry.true_scalar);
      const double route = (r * (adj - stat)).norm() / std::max((r * stat).norm(), 1e-300);
      worst_route = std::max(worst_route, route);
    }
  }
  {
    // no symmetry zeroing the occupied-virtual coupling here
    const System heh{"He 0 0 0; H 0 0 1.46", "6-31g", 1, 0};
    const auto &sys = engine.system(heh, true);
    const auto sol = engine.solve(heh, h);
    const Vec gs = energy_grad_stationary(sys, sol, h);
    const Vec gi = implicit_grad(sys, sol, h, sol.F, &gs).grad;
    worst_route = std::max(worst_route, (gi - gs).norm() / gs.norm());
  }
  return {worst_fd <= 1e-4 && worst_route <= 1e-6,
          "max |g - fd| / (|fd| + 1e-6): " + d + "| stationary vs adjoint " + sci(worst_route)};
}

struct SmokeRun {
  TrainResult res;
  double mae0 = 0.0, mae1 = 0.0;
};

SmokeRun smoke_training() {
  const auto ds = load_dataset(kData + "/datasets/smoke.yaml");
  const auto cfg = load_train_config(kData + "/datasets/smoke_config.yaml");
  Engine engine(gradient_scf_options(cfg.grid_level));
  SmokeRun run;
  const auto start = fresh_checkpoint(cfg);
  run.mae0 = evaluate(ds, start.model, engine).energy_mae;
  run.res = train(ds, start, engine);
  run.mae1 = evaluate(ds, run.res.state.model, engine).energy_mae;
  return run;
}

// 7
Outcome training_smoke() {
  const auto run = smoke_training();
  const double l0 = run.res.initial_loss, l1 = run.res.history.back().loss;
  return {run.res.history.size() == 50 && l1 < 0.5 * l0 && run.mae1 < run.mae0,
          "50 epochs: loss " + sci(l0) + " -> " + sci(l1) + " (ratio " + fix(l1 / l0, 4) + "), MAE " +
              fix(run.mae0, 3) + " -> " + fix(run.mae1, 3) + " kcal/mol"};
}

// 8
Outcome dissociation() {
  SCFOptions o = gradient_scf_options(3);
  const auto pts = dissociation_curve("H2", 0.9, 5.0, 20, "sto-3g", make_functional("lda"), o);
  std::size_t imin = 0;
  bool finite = pts.size() == 20;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    finite = finite && std::isfinite(pts[i].e_total);
    if (pts[i].e_total < pts[imin].e_total) imin = i;
  }
  bool monotone = true;
  for (std::size_t i = imin + 1; i < pts.size(); ++i) monotone = monotone && pts[i].e_total > pts[i - 1].e_total;
  const double rmin = pts[imin].r;
  return {finite && monotone && rmin >= 1.3 && rmin <= 1.6,
          "20 points, minimum at R = " + fix(rmin, 4) + " Bohr (E = " + fix(pts[imin].e_total) + "), " +
              (monotone ? "monotone" : "NOT monotone") + " beyond"};
}

// 9
Outcome invariance() {
  const auto mol = make_molecule("O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11");
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss;
  std::vector<HybridXC> xcs = {make_functional("lda"), make_functional("pbe"), active_nnlda(),
                               make_functional("nnpbe", 1, Activation::softplus, {3, 8, 1})};
  xcs.back().beta = 0.3;
  double rigid = 0.0;
  const auto o = gradient_scf_options(3);
  for (const auto &h : xcs) {
    const auto e0 = scf_solve(mol, "sto-3g", h, o).e_total;
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    Molecule m = mol;
    for (auto &a : m.atoms) a.position = q * a.position + Vec3(0.7, -1.9, 2.3);
    rigid = std::max(rigid, std::abs(scf_solve(m, "sto-3g", h, o).e_total - e0));
  }

  // spin swap on an open-shell density and at random points
  const auto li = build_system(make_molecule("Li 0 0 0; H 0 0 3.0", 1, 1), "sto-3g", 3, true);
  const auto sol = scf_solve(li, make_functional("pbe"), o);
  const auto d = density_on_grid(sol.P[0], sol.P[1], li.ao);
  const auto ds = density_on_grid(sol.P[1], sol.P[0], li.ao);
  double swap = 0.0;
  std::uniform_real_distribution<double> un(0.0, 2.0), ug(-1.0, 1.0);
  for (const auto &h : xcs) {
    const double a = hybrid_exc(d, li.grid, h).e_xc, b = hybrid_exc(ds, li.grid, h).e_xc;
    swap = std::max(swap, std::abs(a - b) / std::abs(a));
    for (int k = 0; k < 1000; ++k) {
      const double nu = un(rng), nd = k % 10 == 0 ? 0.0 : un(rng);
      const Vec3 gu(ug(rng), ug(rng), ug(rng)), gd(ug(rng), ug(rng), ug(rng));
      const double suu = gu.squaredNorm(), sud = gu.dot(gd), sdd = gd.squaredNorm();
      const double x = hybrid_density(h, nu, nd, suu, sud, sdd), y = hybrid_density(h, nd, nu, sdd, sud, suu);
      swap = std::max(swap, std::abs(x - y) / std::max(std::abs(x), 1e-300));
    }
  }
  return {rigid <= 1e-8 && swap <= 1e-12,
          "H2O rotation+translation max|dE| " + sci(rigid) + " Ha (LDA, PBE, NNLDA, NNPBE); spin swap rel " + sci(swap)};
}

// 10
Outcome determinism() {
  std::string d;
  bool ok = true;
  // in-process: two smoke trainings
  const auto a = smoke_training(), b = smoke_training();
  const bool same_train = checkpoint_json(a.res.state).dump() == checkpoint_json(b.res.state).dump() &&
                          history_csv(a.res.history) == history_csv(b.res.history);
  ok = ok && same_train;
  d += std::string("library train ") + (same_train ? "identical" : "DIFFERENT");

  // command line: train + curve, twice
  const fs::path dir = fs::temp_directory_path() / "diffks_acceptance";
  fs::remove_all(dir);
  for (const char *run : {"a", "b"}) {
    fs::create_directories(dir / run);
    const std::string base = (dir / run).string();
    const std::string cmd = std::string("'") + DIFFKS_CLI_PATH + "' train --dataset '" + kData +
                            "/datasets/smoke.yaml' --config '" + kData + "/datasets/smoke_config.yaml' --epochs 5" +
                            " --checkpoint-out '" + base + "/ckpt.json' --history-out '" + base + "/history.csv'" +
                            " > /dev/null && '" + DIFFKS_CLI_PATH + "' curve --points 6 --csv-out '" + base +
                            "/curve.csv' > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed: " + cmd};
  }
  for (const char *f : {"ckpt.json", "history.csv", "curve.csv"}) {
    const auto x = slurp(dir / "a" / f), y = slurp(dir / "b" / f);
    const bool same = !x.empty() && x == y;
    ok = ok && same;
    d += std::string(", ") + f + (same ? " identical" : " DIFFERENT");
  }
  return {ok, d + " (threads " + std::to_string(thread_count()) + ")"};
}

struct Criterion {
  int id;
  const char *name;
  double limit_s;  // 0: none stated
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char **argv) {
  const std::vector<Criterion> all = {
      {1, "integral oracle equivalence", 5, integral_oracles},
      {2, "HF validation energies", 10, hf_energies},
      {3, "LDA single-point energies", 30, lda_energies},
      {4, "grid properties", 0, grid_properties},
      {5, "untrained hybrid equals LDA", 0, untrained_reduction},
      {6, "gradient acceptance", 180, gradient_checks},
      {7, "training smoke test", 300, training_smoke},
      {8, "H2 dissociation curve", 0, dissociation},
      {9, "invariance suite", 0, invariance},
      {10, "determinism", 0, determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  const auto t_all = std::chrono::steady_clock::now();
  for (const auto &c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception &e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) {
      out.pass = false;
      out.detail += " | runtime " + fix(secs, 1) + " s exceeds " + fix(c.limit_s, 0) + " s";
    }
    failed += !out.pass;
    std::printf("%s  #%-2d %s: %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_all).count();
  std::printf("%s  total runtime %.1f s\n", failed ? "FAIL" : "PASS", total);
  return failed ? 1 : 0;
}
