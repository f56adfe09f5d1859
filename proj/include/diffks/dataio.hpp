#pragma once

// Training datasets. A dataset file is YAML: either a list of entries, or a
// map {format: 1, entries: [...]}. Each entry:
//
//   - type: ip                 # ae | ip | dm | dens
//     systems:
//       - {moldesc: "H 0 0 0", basis: sto-3g, charge: 0, spin: 1}
//       - {moldesc: "H 0 0 0", basis: sto-3g, charge: 1, spin: 0}
//     true_val: 0.4665818     # Hartree; dm/dens take a .npy or text file path
//     weight: 1.0
//
// Coordinates in moldesc are Bohr. Array label paths are relative to the
// dataset file.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "diffks/error.hpp"
#include "diffks/geometry.hpp"
#include "diffks/scf.hpp"
#include "diffks/xcfunc.hpp"

namespace diffks {

inline constexpr int kDatasetFormat = 1;

enum class EntryType { ae, ip, dm, dens };

std::string entry_type_name(EntryType t);
EntryType parse_entry_type(const std::string &name);

struct System {
  std::string moldesc;
  std::string basis;
  int charge = 0;
  int spin = 0;

  Molecule molecule() const { return make_molecule(moldesc, charge, spin); }
  // Canonical identity (parsed geometry, lower-case basis, charge, spin).
  std::string key() const;
  bool operator==(const System &o) const = default;
};

struct Entry {
  EntryType type = EntryType::ae;
  std::vector<System> systems;
  std::optional<double> true_scalar;
  std::string true_path;             // as written in the file
  std::optional<Mat> true_matrix;    // loaded from true_path
  double weight = 1.0;
  std::string location;              // file:line:col of the entry

  bool is_energy() const { return type == EntryType::ae || type == EntryType::ip; }
  bool has_label() const { return true_scalar.has_value() || true_matrix.has_value(); }
  std::string describe() const;
};

bool same_entry(const Entry &a, const Entry &b);

struct Dataset {
  std::vector<Entry> entries;
  std::string source;
};

// Throws InputError with "source:line:col: ..." diagnostics. The whole load
// fails on the first invalid entry.
Dataset load_dataset(const std::string &path);
Dataset parse_dataset(const std::string &yaml_text, const std::string &base_dir, const std::string &source);
std::string dump_dataset(const Dataset &ds);

// Structural checks (system counts, AE formula partition, IP charges, label
// kinds). Called by the loader; exposed for programmatic datasets.
void validate_entry(const Entry &e);

// NPY v1.0 (little-endian float64, either order) or a whitespace text matrix.
Mat load_array_label(const std::string &path);
void save_npy(const std::string &path, const Mat &m);

// Shared SCF setup for dataset work: systems are built once and reused.
class Engine {
 public:
  explicit Engine(SCFOptions opts = gradient_scf_options());
  const SCFSystem &system(const System &s, bool need_grid);
  // Throws NumericalError when the SCF does not converge.
  SCFSolution solve(const System &s, const HybridXC &h);
  const SCFOptions &options() const { return opts_; }

 private:
  SCFOptions opts_;
  std::map<std::string, std::unique_ptr<SCFSystem>> cache_;
};

using Prediction = std::variant<double, Mat>;

// ae: sum of atom energies minus the molecule; ip: cation minus neutral;
// dm: total density matrix P_up + P_dn. dens throws NotImplementedError.
Prediction entry_prediction(const Entry &e, const HybridXC &h, Engine &engine);

}  // namespace diffks
