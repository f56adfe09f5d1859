#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "diffks/error.hpp"

namespace diffks {

using Vec3 = Eigen::Vector3d;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr int kMaxZ = 18;
inline constexpr double kBohrPerAngstrom = 1.0 / 0.52917721092;
inline constexpr double kKcalPerHartree = 627.509474;

inline constexpr std::array<std::string_view, kMaxZ + 1> kElementSymbols = {
    "",  "H",  "He", "Li", "Be", "B",  "C",  "N", "O",  "F",
    "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar"};

// Case-insensitive symbol lookup; returns 0 when unknown.
inline int atomic_number(std::string_view symbol) {
  for (int z = 1; z <= kMaxZ; ++z) {
    const auto ref = kElementSymbols[z];
    if (ref.size() != symbol.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < ref.size(); ++i)
      same &= std::tolower(static_cast<unsigned char>(ref[i])) ==
              std::tolower(static_cast<unsigned char>(symbol[i]));
    if (same) return z;
  }
  return 0;
}

inline std::string element_symbol(int z) {
  if (z < 1 || z > kMaxZ)
    throw InputError("atomic number out of range: " + std::to_string(z));
  return std::string(kElementSymbols[z]);
}

struct Atom {
  int atomic_number = 1;
  Vec3 position = Vec3::Zero();  // Bohr

  bool operator==(const Atom &o) const {
    return atomic_number == o.atomic_number && position == o.position;
  }
};

struct Molecule {
  std::vector<Atom> atoms;
  int charge = 0;
  int spin = 0;  // number of unpaired electrons

  int nuclear_charge() const {
    int z = 0;
    for (const auto &a : atoms) z += a.atomic_number;
    return z;
  }
  int electron_count() const { return nuclear_charge() - charge; }
  int n_up() const { return (electron_count() + spin) / 2; }
  int n_dn() const { return (electron_count() - spin) / 2; }

  // Throws InputError when charge/spin are inconsistent with the atoms.
  void validate() const {
    if (atoms.empty()) throw InputError("molecule has no atoms");
    for (const auto &a : atoms) {
      if (a.atomic_number < 1 || a.atomic_number > kMaxZ)
        throw InputError("atomic number out of range (H-Ar supported)");
      if (!a.position.allFinite()) throw InputError("non-finite atom position");
    }
    const int n = electron_count();
    if (n < 0) throw InputError("negative electron count");
    if (spin < 0) throw InputError("spin must be non-negative");
    if (spin > n) throw InputError("spin exceeds electron count");
    if ((n - spin) % 2 != 0)
      throw InputError("electron count " + std::to_string(n) + " and spin " +
                       std::to_string(spin) + " have different parity");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::string_view context) {
  double value = 0.0;
  const char *first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(value))
    throw InputError("malformed coordinate '" + std::string(tok) + "' in '" +
                     std::string(context) + "'");
  return value;
}

inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Parses "SYMBOL x y z; SYMBOL x y z; ..." with coordinates in Bohr.
inline std::vector<Atom> parse_moldesc(std::string_view text) {
  std::vector<Atom> atoms;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(';', start);
    if (end == std::string_view::npos) end = text.size();
    const auto record = detail::trim(text.substr(start, end - start));
    if (!record.empty()) {
      const auto tokens = detail::split_ws(record);
      if (tokens.size() != 4)
        throw InputError("moldesc record '" + std::string(record) +
                         "' must be 'SYMBOL x y z'");
      const int z = atomic_number(tokens[0]);
      if (z == 0)
        throw InputError("unknown element '" + std::string(tokens[0]) + "'");
      Atom a;
      a.atomic_number = z;
      for (int k = 0; k < 3; ++k)
        a.position[k] = detail::parse_double(tokens[k + 1], record);
      atoms.push_back(a);
    }
    start = end + 1;
  }
  if (atoms.empty()) throw InputError("empty molecule description");
  return atoms;
}

// Shortest round-trip decimal formatting, so parse_moldesc(format_moldesc(a)) == a.
inline std::string format_moldesc(const std::vector<Atom> &atoms) {
  std::string out;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (i) out += "; ";
    out += element_symbol(atoms[i].atomic_number);
    for (int k = 0; k < 3; ++k) out += " " + detail::format_double(atoms[i].position[k]);
  }
  return out;
}

inline Molecule make_molecule(std::string_view moldesc, int charge = 0, int spin = 0) {
  Molecule mol{parse_moldesc(moldesc), charge, spin};
  mol.validate();
  return mol;
}

inline double nuclear_repulsion(const Molecule &mol) {
  double e = 0.0;
  for (std::size_t a = 0; a < mol.atoms.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      const double r = (mol.atoms[a].position - mol.atoms[b].position).norm();
      if (r < 1e-8)
        throw InputError("coincident nuclei " + std::to_string(b) + " and " +
                         std::to_string(a));
      e += mol.atoms[a].atomic_number * mol.atoms[b].atomic_number / r;
    }
  }
  return e;
}

}  // namespace diffks
