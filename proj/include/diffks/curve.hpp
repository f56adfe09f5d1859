#pragma once

// Diatomic potential-energy curves along z, R in Bohr.

#include <cstdio>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "diffks/scf.hpp"

namespace diffks {

// "H2", "LiH", "HeH" -> element pair. Anything but two atoms is an InputError.
inline std::pair<std::string, std::string> parse_diatomic(const std::string &formula) {
  static const std::regex tok("([A-Z][a-z]?)(\\d*)");
  std::vector<std::string> atoms;
  std::size_t consumed = 0;
  for (auto it = std::sregex_iterator(formula.begin(), formula.end(), tok); it != std::sregex_iterator(); ++it) {
    if (it->position() != static_cast<long>(consumed)) break;
    consumed += it->length();
    const int n = (*it)[2].length() ? std::stoi((*it)[2]) : 1;
    if (atomic_number((*it)[1].str()) == 0) throw InputError("unknown element '" + (*it)[1].str() + "'");
    for (int k = 0; k < n && atoms.size() < 3; ++k) atoms.push_back((*it)[1]);
  }
  if (formula.empty() || consumed != formula.size()) throw InputError("cannot parse molecule '" + formula + "'");
  if (atoms.size() != 2)
    throw InputError("curve needs a diatomic molecule, '" + formula + "' has " +
                     (atoms.size() > 2 ? std::string("more than 2") : std::to_string(atoms.size())) + " atom(s)");
  return {atoms[0], atoms[1]};
}

struct CurvePoint {
  double r = 0.0;
  double e_total = 0.0;
  double e_rel_kcal = 0.0;  // relative to the largest-R point
};

inline std::vector<CurvePoint> dissociation_curve(const std::string &formula, double rmin, double rmax, int points,
                                                  const std::string &basis, const HybridXC &h,
                                                  const SCFOptions &opts, int charge = 0, int spin = 0) {
  const auto [a, b] = parse_diatomic(formula);
  if (!(rmin > 0) || !(rmin < rmax)) throw InputError("need 0 < rmin < rmax");
  if (points < 1) throw InputError("points must be >= 1");
  std::vector<CurvePoint> out;
  for (int i = 0; i < points; ++i) {
    const double r = points == 1 ? rmin : rmin + (rmax - rmin) * i / (points - 1);
    const auto mol = make_molecule(a + " 0 0 0; " + b + " 0 0 " + detail::format_double(r), charge, spin);
    const auto sol = scf_solve(mol, basis, h, opts);
    if (!sol.converged) throw NumericalError("SCF did not converge at R = " + detail::format_double(r) + " Bohr");
    if (!std::isfinite(sol.e_total)) throw NumericalError("non-finite energy at R = " + detail::format_double(r));
    out.push_back({r, sol.e_total, 0.0});
  }
  const double ref = out.back().e_total;
  for (auto &p : out) p.e_rel_kcal = (p.e_total - ref) * kKcalPerHartree;
  return out;
}

inline std::string curve_csv(const std::vector<CurvePoint> &pts) {
  std::string csv = "r_bohr,e_total_ha,e_rel_kcalmol\n";
  char line[128];
  for (const auto &p : pts) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.r, p.e_total, p.e_rel_kcal);
    csv += line;
  }
  return csv;
}

}  // namespace diffks
