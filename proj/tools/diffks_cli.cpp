// diffks command-line tool. Exit codes: 0 ok, 1 numerical failure, 2 input error.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "diffks/diffks.hpp"

#ifndef DIFFKS_SOURCE_DIR
#define DIFFKS_SOURCE_DIR "."
#endif

using namespace diffks;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char *f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// Every option of the subcommand with its effective value.
void print_options(const CLI::App &sub) {
  std::cout << "options:";
  for (const auto *opt : sub.get_options()) {
    if (opt->get_name() == "--help") continue;
    std::string v;
    if (opt->count() > 0) {
      for (const auto &r : opt->results()) v += (v.empty() ? "" : ",") + r;
      if (opt->get_type_size() == 0 && v.empty()) v = "true";
    } else {
      v = opt->get_default_str();
      if (opt->get_type_size() == 0 && v.empty()) v = "false";
    }
    if (v.find(' ') != std::string::npos || v.empty()) v = "\"" + v + "\"";
    std::cout << " " << opt->get_name().substr(2) << "=" << v;
  }
  std::cout << " threads=" << thread_count() << "\n";
}

struct ModelArgs {
  std::string functional;
  std::string checkpoint;
  std::uint64_t seed = 0;

  void add(CLI::App *sub, const std::string &default_functional) {
    functional = default_functional;
    sub->add_option("--functional", functional, "lda, pbe, hf, nnlda, nnpbe");
    sub->add_option("--checkpoint", checkpoint, "trained model (JSON checkpoint)");
    sub->add_option("--seed", seed, "network initialization seed when no checkpoint is given");
  }

  HybridXC load(const CLI::App &sub) const {
    if (checkpoint.empty()) return make_functional(functional, seed);
    auto cp = load_checkpoint(checkpoint);
    if (sub.get_option("--functional")->count() > 0 && cp.model.name != functional)
      throw InputError("checkpoint '" + checkpoint + "' holds a " + cp.model.name + " model, not " + functional);
    return cp.model;
  }
};

SCFOptions scf_options(int grid_level, int max_iterations) {
  auto o = gradient_scf_options(grid_level);
  o.max_iterations = max_iterations;
  o.validate();
  return o;
}

int cmd_scf(const CLI::App &sub, const std::string &moldesc, const std::string &basis, const ModelArgs &m, int charge,
            int spin, int grid_level, int max_iterations, const std::string &json_out) {
  const auto mol = make_molecule(moldesc, charge, spin);
  const auto h = m.load(sub);
  SCFOptions opts;
  opts.grid_level = grid_level;
  opts.max_iterations = max_iterations;
  const auto sol = scf_solve(mol, basis, h, opts);
  std::cout << "functional: " << h.name << (h.has_network() ? " (alpha " + fmt("%.6g", h.alpha) + ", beta " +
                                                                  fmt("%.6g", h.beta) + ")"
                                                            : "")
            << "\n";
  std::cout << "converged: " << (sol.converged ? "yes" : "no") << " after " << sol.iterations << " iterations\n";
  for (const auto &w : sol.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "e_total    " << fmt("%.10f", sol.e_total) << " Ha\n"
            << "e_kin      " << fmt("%.10f", sol.e_kin) << "\n"
            << "e_el       " << fmt("%.10f", sol.e_el) << "\n"
            << "e_coulomb  " << fmt("%.10f", sol.e_coulomb) << "\n"
            << "e_xc       " << fmt("%.10f", sol.e_xc) << "\n"
            << "e_nuc      " << fmt("%.10f", sol.e_nuc) << "\n";
  if (!json_out.empty()) {
    auto j = solution_json(sol);
    j["moldesc"] = moldesc;
    j["basis"] = basis;
    j["charge"] = charge;
    j["spin"] = spin;
    j["functional"] = h.name;
    std::ofstream out(json_out);
    if (!out) throw InputError("cannot write '" + json_out + "'");
    out << j.dump(1) << "\n";
  }
  if (!sol.converged) {
    std::cerr << "error: SCF did not converge\n";
    return 1;
  }
  return 0;
}

int cmd_train(const std::string &dataset, const std::string &config, const std::string &ckpt_out,
              std::string history_out, const std::string &resume, const CLI::App &sub, int epochs, double lr,
              std::uint64_t seed) {
  const auto ds = load_dataset(dataset);
  Checkpoint state;
  if (!resume.empty()) {
    state = load_checkpoint(resume);
  } else {
    state.config = config.empty() ? TrainConfig{} : load_train_config(config);
  }
  if (sub.get_option("--epochs")->count()) state.config.epochs = epochs;
  if (sub.get_option("--learning-rate")->count()) state.config.learning_rate = lr;
  if (sub.get_option("--seed")->count()) {
    if (!resume.empty()) throw InputError("--seed only applies to a fresh model");
    state.config.seed = seed;
  }
  state.config.validate();
  if (resume.empty()) state.model = initial_model(state.config);
  if (history_out.empty()) history_out = (fs::path(ckpt_out).replace_extension("").string()) + "_history.csv";
  std::cout << "config: " << config_json(state.config).dump() << "\n";
  std::cout << "entries: " << ds.entries.size() << ", parameters: " << theta_size(state.model) << "\n";

  Engine engine(gradient_scf_options(state.config.grid_level));
  std::cout << "epoch,loss,alpha,beta,theta_norm\n";
  const auto res = train(ds, state, engine, [](const HistoryRow &r) {
    std::cout << history_csv({r}).substr(std::string("epoch,loss,alpha,beta,theta_norm\n").size()) << std::flush;
  });
  std::cout << "initial loss " << fmt("%.10g", res.initial_loss) << ", final loss "
            << fmt("%.10g", res.history.back().loss) << "\n";
  save_checkpoint(ckpt_out, res.state);
  write_history_csv(history_out, res.history);
  std::cout << "wrote " << ckpt_out << " and " << history_out << "\n";
  return 0;
}

int cmd_evaluate(const std::string &dataset, const ModelArgs &m, const CLI::App &sub, int grid_level) {
  const auto ds = load_dataset(dataset);
  const auto h = m.load(sub);
  Engine engine(gradient_scf_options(grid_level));
  const auto rep = evaluate(ds, h, engine);
  std::cout << "idx  type  prediction_ha      reference_ha       error  system\n";
  for (const auto &r : rep.entries) {
    std::cout << std::left;
    char line[256];
    if (r.failed) {
      std::snprintf(line, sizeof line, "%-4zu %-5s FAILED: %s\n", r.index, entry_type_name(r.type).c_str(),
                    r.message.c_str());
    } else if (r.type == EntryType::dm) {
      std::snprintf(line, sizeof line, "%-4zu %-5s %-18s %-18s %.6e (Frobenius)  %s\n", r.index, "dm", "-", "-",
                    r.error, r.label.c_str());
    } else {
      std::snprintf(line, sizeof line, "%-4zu %-5s %-18.10f %-18.10f %+.4f kcal/mol  %s\n", r.index,
                    entry_type_name(r.type).c_str(), r.prediction, r.reference, r.error, r.label.c_str());
    }
    std::cout << line;
  }
  for (const auto &[k, v] : rep.mae)
    std::cout << "MAE " << k << ": " << fmt("%.6f", v) << (k == "dm" ? "" : " kcal/mol") << " (n=" << rep.counts.at(k)
              << ")\n";
  std::cout << "MAE energy: " << fmt("%.6f", rep.energy_mae) << " kcal/mol (n=" << rep.energy_count << ")\n";
  std::cout << "failed: " << rep.failed << "\n";
  return rep.failed ? 1 : 0;
}

int cmd_predict(const std::string &dataset, const ModelArgs &m, const CLI::App &sub, int grid_level) {
  const auto ds = load_dataset(dataset);
  const auto h = m.load(sub);
  Engine engine(gradient_scf_options(grid_level));
  int failed = 0;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const auto &e = ds.entries[i];
    std::cout << i << " " << entry_type_name(e.type) << " [" << e.systems.front().moldesc << "] ";
    try {
      const auto p = entry_prediction(e, h, engine);
      if (const auto *x = std::get_if<double>(&p)) {
        std::cout << fmt("%.10f", *x) << " Ha\n";
      } else {
        const Mat &P = std::get<Mat>(p);
        std::cout << P.rows() << "x" << P.cols() << " density matrix\n";
        for (Eigen::Index r = 0; r < P.rows(); ++r) {
          std::cout << " ";
          for (Eigen::Index c = 0; c < P.cols(); ++c) std::cout << " " << fmt("%.10f", P(r, c));
          std::cout << "\n";
        }
      }
    } catch (const NumericalError &err) {
      std::cout << "FAILED: " << err.what() << "\n";
      ++failed;
    }
  }
  return failed ? 1 : 0;
}

int cmd_curve(const std::string &molecule, double rmin, double rmax, int points, const std::string &basis,
              const ModelArgs &m, const CLI::App &sub, int charge, int spin, int grid_level,
              const std::string &csv_out) {
  parse_diatomic(molecule);
  const auto h = m.load(sub);
  const auto csv = curve_csv(dissociation_curve(molecule, rmin, rmax, points, basis, h,
                                                scf_options(grid_level, 200), charge, spin));
  std::cout << csv;
  if (!csv_out.empty()) {
    std::ofstream out(csv_out);
    if (!out) throw InputError("cannot write '" + csv_out + "'");
    out << csv;
  }
  return 0;
}

std::string sha256_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read '" + p.string() + "'");
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) {
    char h[3];
    std::snprintf(h, sizeof h, "%02x", md[i]);
    hex += h;
  }
  return hex;
}

// Manifest lines are "<sha256>  <path relative to root>" (sha256sum format).
int cmd_fixtures(const std::string &root, std::string manifest, bool regenerate) {
  if (manifest.empty()) manifest = (fs::path(root) / "tools/reference/fixtures.sha256").string();
  if (regenerate) {
    const std::string cmd = "cd '" + root + "' && python3 tools/reference/make_reference_data.py";
    std::cout << "running: " << cmd << "\n";
    if (std::system(cmd.c_str()) != 0) throw NumericalError("reference generator failed");
  }
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot open manifest '" + manifest + "'");
  std::string line;
  int ok = 0, bad = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string hash, rel;
    ls >> hash >> rel;
    if (hash.size() != 64 || rel.empty()) throw InputError("malformed manifest line: " + line);
    const auto path = fs::path(root) / rel;
    if (!fs::exists(path)) {
      std::cout << "MISSING  " << rel << "\n";
      ++bad;
      continue;
    }
    const auto got = sha256_file(path);
    std::cout << (got == hash ? "OK       " : "CHANGED  ") << rel << "\n";
    (got == hash ? ok : bad)++;
  }
  std::cout << ok << " ok, " << bad << " changed or missing\n";
  return bad ? 1 : 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"diffks: differentiable Kohn-Sham DFT with neural exchange-correlation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // scf
  auto *scf = app.add_subcommand("scf", "single-point SCF energy");
  std::string moldesc, basis = "sto-3g", json_out;
  int charge = 0, spin = 0, grid_level = kDefaultGridLevel, max_it = 100;
  ModelArgs scf_model;
  scf->add_option("--moldesc", moldesc, "\"SYMBOL x y z; ...\" in Bohr")->required();
  scf->add_option("--basis", basis, "sto-3g, 6-31g, or a basis JSON file");
  scf_model.add(scf, "lda");
  scf->add_option("--charge", charge);
  scf->add_option("--spin", spin, "number of unpaired electrons");
  scf->add_option("--grid-level", grid_level)->check(CLI::Range(1, 5));
  scf->add_option("--max-iterations", max_it);
  scf->add_option("--json-out", json_out, "write the solution as JSON");

  // train
  auto *tr = app.add_subcommand("train", "fit a neural functional to a dataset");
  std::string dataset, config, ckpt_out = "checkpoint.json", history_out, resume;
  int epochs = 50;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  tr->add_option("--dataset", dataset, "dataset YAML")->required();
  tr->add_option("--config", config, "training config YAML");
  tr->add_option("--checkpoint-out", ckpt_out);
  tr->add_option("--history-out", history_out, "history CSV (default <checkpoint-out>_history.csv)");
  tr->add_option("--resume", resume, "continue from a checkpoint");
  tr->add_option("--epochs", epochs, "overrides the config");
  tr->add_option("--learning-rate", lr, "overrides the config");
  tr->add_option("--seed", seed, "overrides the config");

  // evaluate / predict
  auto *ev = app.add_subcommand("evaluate", "per-entry errors and MAE (kcal/mol)");
  auto *pr = app.add_subcommand("predict", "predictions without labels");
  ModelArgs ev_model, pr_model;
  std::string ev_dataset, pr_dataset;
  int ev_level = kDefaultGridLevel, pr_level = kDefaultGridLevel;
  ev->add_option("--dataset", ev_dataset)->required();
  ev_model.add(ev, "lda");
  ev->add_option("--grid-level", ev_level)->check(CLI::Range(1, 5));
  pr->add_option("--dataset", pr_dataset)->required();
  pr_model.add(pr, "lda");
  pr->add_option("--grid-level", pr_level)->check(CLI::Range(1, 5));

  // curve
  auto *cv = app.add_subcommand("curve", "diatomic dissociation curve (Bohr)");
  std::string molecule = "H2", cv_basis = "sto-3g", csv_out;
  double rmin = 0.9, rmax = 5.0;
  int points = 20, cv_charge = 0, cv_spin = 0, cv_level = kDefaultGridLevel;
  ModelArgs cv_model;
  cv->add_option("--molecule", molecule, "diatomic formula, e.g. H2 or LiH");
  cv->add_option("--rmin", rmin, "Bohr");
  cv->add_option("--rmax", rmax, "Bohr");
  cv->add_option("--points", points);
  cv->add_option("--basis", cv_basis);
  cv_model.add(cv, "lda");
  cv->add_option("--charge", cv_charge);
  cv->add_option("--spin", cv_spin);
  cv->add_option("--grid-level", cv_level)->check(CLI::Range(1, 5));
  cv->add_option("--csv-out", csv_out);

  // fixtures
  auto *fx = app.add_subcommand("fixtures", "validate reference data against committed hashes");
  std::string root = DIFFKS_SOURCE_DIR, manifest;
  bool regenerate = false;
  fx->add_option("--root", root, "repository root");
  fx->add_option("--manifest", manifest, "sha256 manifest (default <root>/tools/reference/fixtures.sha256)");
  fx->add_flag("--regenerate", regenerate, "rerun the reference generator first (needs PySCF)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    for (auto *sub : app.get_subcommands()) print_options(*sub);
    if (scf->parsed()) return cmd_scf(*scf, moldesc, basis, scf_model, charge, spin, grid_level, max_it, json_out);
    if (tr->parsed()) return cmd_train(dataset, config, ckpt_out, history_out, resume, *tr, epochs, lr, seed);
    if (ev->parsed()) return cmd_evaluate(ev_dataset, ev_model, *ev, ev_level);
    if (pr->parsed()) return cmd_predict(pr_dataset, pr_model, *pr, pr_level);
    if (cv->parsed())
      return cmd_curve(molecule, rmin, rmax, points, cv_basis, cv_model, *cv, cv_charge, cv_spin, cv_level, csv_out);
    if (fx->parsed()) return cmd_fixtures(root, manifest, regenerate);
  } catch (const InputError &e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NotImplementedError &e) {
    std::cerr << "not supported: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
