#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "diffks/embedded_data.hpp"
#include "diffks/error.hpp"
#include "diffks/geometry.hpp"

namespace diffks {

inline constexpr int kMaxAngularMomentum = 2;

inline double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

inline int cartesian_count(int l) { return (l + 1) * (l + 2) / 2; }

struct CartesianPowers {
  int x = 0, y = 0, z = 0;
  int l() const { return x + y + z; }
};

// Components of a shell in x >= y >= z lexicographic order (p: x y z; d: xx xy xz yy yz zz).
inline std::vector<CartesianPowers> cartesian_components(int l) {
  std::vector<CartesianPowers> out;
  for (int lx = l; lx >= 0; --lx)
    for (int ly = l - lx; ly >= 0; --ly) out.push_back({lx, ly, l - lx - ly});
  return out;
}

// Norm of a primitive x^l exp(-a r^2).
inline double primitive_norm(double exponent, int l) {
  return std::pow(2.0 * exponent / M_PI, 0.75) * std::pow(4.0 * exponent, 0.5 * l) /
         std::sqrt(double_factorial(2 * l - 1));
}

// Extra factor making a non-axial Cartesian component (e.g. d_xy) unit-normalized.
inline double component_factor(const CartesianPowers &p) {
  return std::sqrt(double_factorial(2 * p.l() - 1) /
                   (double_factorial(2 * p.x - 1) * double_factorial(2 * p.y - 1) *
                    double_factorial(2 * p.z - 1)));
}

// Contracted Cartesian shell. `coefficients` multiply normalized primitives; the
// contraction itself is normalized by normalize_shell.
struct Shell {
  int center_index = 0;
  Vec3 center = Vec3::Zero();
  int l = 0;
  std::vector<double> exponents;
  std::vector<double> coefficients;

  // Coefficients to apply to raw primitives x^l exp(-a r^2).
  std::vector<double> primitive_coefficients() const {
    std::vector<double> out(exponents.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = coefficients[i] * primitive_norm(exponents[i], l);
    return out;
  }
  int size() const { return cartesian_count(l); }
};

// Sorts primitives by decreasing exponent and checks the shell invariants.
inline Shell canonicalize_shell(Shell shell) {
  if (shell.l < 0 || shell.l > kMaxAngularMomentum)
    throw InputError("angular momentum " + std::to_string(shell.l) +
                     " not supported (l <= 2)");
  if (shell.exponents.empty() || shell.exponents.size() != shell.coefficients.size())
    throw InputError("shell exponent/coefficient lists must be non-empty and equal length");
  std::vector<std::size_t> order(shell.exponents.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return shell.exponents[a] > shell.exponents[b];
  });
  Shell out = shell;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.exponents[i] = shell.exponents[order[i]];
    out.coefficients[i] = shell.coefficients[order[i]];
  }
  for (std::size_t i = 0; i < out.exponents.size(); ++i) {
    if (!(out.exponents[i] > 0.0) || !std::isfinite(out.exponents[i]))
      throw InputError("shell exponents must be positive and finite");
    if (i > 0 && !(out.exponents[i] < out.exponents[i - 1]))
      throw InputError("duplicate exponent in shell");
  }
  return out;
}

// Rescales the contraction so the x^l component has unit self-overlap.
inline Shell normalize_shell(Shell shell) {
  const int l = shell.l;
  double self = 0.0;
  for (std::size_t i = 0; i < shell.exponents.size(); ++i) {
    for (std::size_t j = 0; j < shell.exponents.size(); ++j) {
      const double p = shell.exponents[i] + shell.exponents[j];
      const double overlap = std::pow(M_PI / p, 1.5) * double_factorial(2 * l - 1) /
                             std::pow(2.0 * p, l);
      self += shell.coefficients[i] * shell.coefficients[j] *
              primitive_norm(shell.exponents[i], l) *
              primitive_norm(shell.exponents[j], l) * overlap;
    }
  }
  if (!(self > 0.0)) throw InputError("shell contraction has zero norm");
  const double scale = 1.0 / std::sqrt(self);
  for (auto &c : shell.coefficients) c *= scale;
  return shell;
}

struct BasisFunction {
  int shell = 0;
  CartesianPowers powers;
  double factor = 1.0;  // component_factor(powers)
};

struct AOBasis {
  std::string name;
  std::vector<Shell> shells;
  std::vector<int> shell_offsets;  // first AO of each shell
  std::vector<BasisFunction> functions;

  int ao_count() const { return static_cast<int>(functions.size()); }

  void add_shell(Shell shell) {
    shell_offsets.push_back(ao_count());
    const int index = static_cast<int>(shells.size());
    for (const auto &p : cartesian_components(shell.l))
      functions.push_back({index, p, component_factor(p)});
    shells.push_back(std::move(shell));
  }
};

// Element symbol -> list of shells (centers unset), as stored in the basis JSON layout
//   {"H": [{"l": 0, "exponents": [...], "coefficients": [...]}, ...], ...}
using BasisTable = std::map<std::string, std::vector<Shell>>;

inline BasisTable parse_basis_table(const std::string &text, const std::string &origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw InputError("basis file " + origin + ": " + e.what());
  }
  if (!doc.is_object()) throw InputError("basis file " + origin + ": top level must be an object");
  BasisTable table;
  for (const auto &[symbol, shells] : doc.items()) {
    const int z = atomic_number(symbol);
    if (z == 0) throw InputError("basis file " + origin + ": unknown element '" + symbol + "'");
    auto &list = table[element_symbol(z)];
    for (const auto &js : shells) {
      try {
        Shell s;
        s.l = js.at("l").get<int>();
        s.exponents = js.at("exponents").get<std::vector<double>>();
        s.coefficients = js.at("coefficients").get<std::vector<double>>();
        list.push_back(canonicalize_shell(std::move(s)));
      } catch (const nlohmann::json::exception &e) {
        throw InputError("basis file " + origin + ", element " + symbol + ": " + e.what());
      }
    }
  }
  return table;
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline const BasisTable *builtin_basis(const std::string &name) {
  static const BasisTable sto3g = parse_basis_table(std::string(embedded::kBasisSto3g), "STO-3G");
  static const BasisTable b631g = parse_basis_table(std::string(embedded::kBasis631g), "6-31G");
  const auto key = lower(name);
  if (key == "sto-3g" || key == "sto3g") return &sto3g;
  if (key == "6-31g" || key == "631g") return &b631g;
  return nullptr;
}

}  // namespace detail

inline AOBasis build_basis(const BasisTable &table, const std::string &name,
                           const Molecule &mol) {
  AOBasis basis;
  basis.name = name;
  for (std::size_t a = 0; a < mol.atoms.size(); ++a) {
    const auto symbol = element_symbol(mol.atoms[a].atomic_number);
    const auto it = table.find(symbol);
    if (it == table.end() || it->second.empty())
      throw InputError("basis " + name + " has no entry for element " + symbol);
    for (Shell shell : it->second) {
      shell.center_index = static_cast<int>(a);
      shell.center = mol.atoms[a].position;
      basis.add_shell(normalize_shell(std::move(shell)));
    }
  }
  return basis;
}

// `name` is a built-in basis ("STO-3G", "6-31G") or a path to a JSON file in the
// same layout as the built-in tables.
inline AOBasis load_basis(const std::string &name, const Molecule &mol) {
  if (const auto *table = detail::builtin_basis(name)) return build_basis(*table, name, mol);
  if (std::filesystem::is_regular_file(name)) {
    std::ifstream in(name);
    std::stringstream ss;
    ss << in.rdbuf();
    return build_basis(parse_basis_table(ss.str(), name), name, mol);
  }
  throw InputError("unknown basis set '" + name + "'");
}

}  // namespace diffks
