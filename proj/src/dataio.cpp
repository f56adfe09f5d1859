#include "diffks/dataio.hpp"

#include <yaml-cpp/yaml.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace diffks {

namespace fs = std::filesystem;

std::string entry_type_name(EntryType t) {
  switch (t) {
    case EntryType::ae: return "ae";
    case EntryType::ip: return "ip";
    case EntryType::dm: return "dm";
    case EntryType::dens: return "dens";
  }
  return "?";
}

EntryType parse_entry_type(const std::string &name) {
  if (name == "ae") return EntryType::ae;
  if (name == "ip") return EntryType::ip;
  if (name == "dm") return EntryType::dm;
  if (name == "dens") return EntryType::dens;
  throw InputError("unknown entry type '" + name + "' (expected ae, ip, dm or dens)");
}

std::string System::key() const {
  return format_moldesc(parse_moldesc(moldesc)) + "|" + detail::lower(basis) + "|" + std::to_string(charge) + "|" +
         std::to_string(spin);
}

std::string Entry::describe() const {
  std::string s = entry_type_name(type) + " entry";
  if (!systems.empty()) s += " [" + systems.front().moldesc + "]";
  if (!location.empty()) s += " at " + location;
  return s;
}

bool same_entry(const Entry &a, const Entry &b) {
  if (a.type != b.type || a.systems != b.systems || a.true_scalar != b.true_scalar || a.true_path != b.true_path ||
      a.weight != b.weight || a.true_matrix.has_value() != b.true_matrix.has_value())
    return false;
  return !a.true_matrix || *a.true_matrix == *b.true_matrix;
}

namespace {

std::map<int, int> formula(const Molecule &m) {
  std::map<int, int> f;
  for (const auto &a : m.atoms) ++f[a.atomic_number];
  return f;
}

std::string formula_string(const std::map<int, int> &f) {
  std::string s;
  for (auto [z, n] : f) s += element_symbol(z) + (n > 1 ? std::to_string(n) : "");
  return s;
}

}  // namespace

void validate_entry(const Entry &e) {
  if (e.systems.empty()) throw InputError("entry has no systems");
  std::vector<Molecule> mols;
  for (std::size_t i = 0; i < e.systems.size(); ++i) {
    const auto &s = e.systems[i];
    try {
      mols.push_back(s.molecule());
      load_basis(s.basis, mols.back());
    } catch (const InputError &err) {
      throw InputError("system " + std::to_string(i) + ": " + err.what());
    }
  }
  const auto n = e.systems.size();
  switch (e.type) {
    case EntryType::ae: {
      if (n < 2) throw InputError("ae entry needs the molecule followed by its atoms (got " + std::to_string(n) + " system)");
      std::map<int, int> atoms;
      for (std::size_t i = 1; i < n; ++i) {
        if (mols[i].atoms.size() != 1)
          throw InputError("ae entry: system " + std::to_string(i) + " is not a single atom");
        ++atoms[mols[i].atoms[0].atomic_number];
      }
      const auto mf = formula(mols[0]);
      if (atoms != mf)
        throw InputError("ae entry: atoms " + formula_string(atoms) + " do not partition the molecule formula " +
                         formula_string(mf));
      break;
    }
    case EntryType::ip:
      if (n != 2) throw InputError("ip entry needs exactly 2 systems (neutral, cation), got " + std::to_string(n));
      if (formula(mols[0]) != formula(mols[1])) throw InputError("ip entry: the two systems have different formulas");
      if (e.systems[1].charge != e.systems[0].charge + 1)
        throw InputError("ip entry: charges must be (q, q+1), got (" + std::to_string(e.systems[0].charge) + ", " +
                         std::to_string(e.systems[1].charge) + ")");
      break;
    case EntryType::dm:
    case EntryType::dens:
      if (n != 1)
        throw InputError(entry_type_name(e.type) + " entry needs exactly 1 system, got " + std::to_string(n));
      break;
  }
  if (!std::isfinite(e.weight) || e.weight < 0.0) throw InputError("weight must be finite and non-negative");
  if (e.is_energy()) {
    if (!e.true_path.empty() || e.true_matrix)
      throw InputError(entry_type_name(e.type) + " entry needs a scalar label (Hartree), got an array file");
    if (e.true_scalar && !std::isfinite(*e.true_scalar)) throw InputError("non-finite label");
  } else {
    if (e.true_scalar)
      throw InputError(entry_type_name(e.type) + " entry needs an array label (.npy or text file path), got a number");
    if (e.true_matrix && e.true_matrix->rows() != e.true_matrix->cols())
      throw InputError("array label is " + std::to_string(e.true_matrix->rows()) + "x" +
                       std::to_string(e.true_matrix->cols()) + ", expected a square AO matrix");
  }
}

// ---- YAML ----

namespace {

struct Located {
  std::string source;
  std::string at(const YAML::Node &n) const {
    const auto m = n.Mark();
    if (m.is_null()) return source;
    return source + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
  }
  [[noreturn]] void fail(const YAML::Node &n, const std::string &msg) const { throw InputError(at(n) + ": " + msg); }

  void check_keys(const YAML::Node &map, const std::set<std::string> &allowed, const std::string &what) const {
    if (!map.IsMap()) fail(map, what + " must be a mapping");
    for (const auto &kv : map) {
      const auto key = kv.first.Scalar();
      if (!allowed.count(key)) {
        std::string list;
        for (const auto &a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(kv.first, "unknown key '" + key + "' in " + what + " (allowed: " + list + ")");
      }
    }
  }
  YAML::Node required(const YAML::Node &map, const std::string &key, const std::string &what) const {
    const auto v = map[key];
    if (!v) fail(map, what + " is missing required key '" + key + "'");
    return v;
  }
  std::string str(const YAML::Node &n, const std::string &field) const {
    if (!n.IsScalar()) fail(n, "'" + field + "' must be a scalar");
    return n.Scalar();
  }
  int integer(const YAML::Node &n, const std::string &field) const {
    try {
      if (n.IsScalar()) return n.as<int>();
    } catch (const YAML::Exception &) {
    }
    fail(n, "'" + field + "' must be an integer, got '" + (n.IsScalar() ? n.Scalar() : std::string("non-scalar")) + "'");
  }
  std::optional<double> number(const YAML::Node &n) const {
    if (!n.IsScalar()) return std::nullopt;
    try {
      return n.as<double>();
    } catch (const YAML::Exception &) {
      return std::nullopt;
    }
  }
};

System parse_system(const YAML::Node &n, const Located &loc) {
  loc.check_keys(n, {"moldesc", "basis", "charge", "spin"}, "system");
  System s;
  s.moldesc = loc.str(loc.required(n, "moldesc", "system"), "moldesc");
  s.basis = loc.str(loc.required(n, "basis", "system"), "basis");
  if (n["charge"]) s.charge = loc.integer(n["charge"], "charge");
  if (n["spin"]) s.spin = loc.integer(n["spin"], "spin");
  try {
    s.molecule();
  } catch (const InputError &e) {
    loc.fail(n, e.what());
  }
  return s;
}

Entry parse_entry(const YAML::Node &n, const Located &loc, const std::string &base_dir) {
  loc.check_keys(n, {"type", "systems", "true_val", "weight"}, "entry");
  Entry e;
  e.location = loc.at(n);
  const auto type = loc.required(n, "type", "entry");
  try {
    e.type = parse_entry_type(loc.str(type, "type"));
  } catch (const InputError &err) {
    loc.fail(type, err.what());
  }
  const auto systems = loc.required(n, "systems", "entry");
  if (!systems.IsSequence() || systems.size() == 0) loc.fail(systems, "'systems' must be a non-empty list");
  for (const auto &s : systems) e.systems.push_back(parse_system(s, loc));
  if (const auto w = n["weight"]) {
    const auto v = loc.number(w);
    if (!v) loc.fail(w, "'weight' must be a number");
    e.weight = *v;
  }
  if (const auto tv = n["true_val"]; tv && !tv.IsNull()) {
    if (!tv.IsScalar()) loc.fail(tv, "'true_val' must be a number or a file path");
    if (const auto v = loc.number(tv)) {
      e.true_scalar = *v;
    } else {
      e.true_path = tv.Scalar();
    }
  }
  try {
    validate_entry(e);
  } catch (const InputError &err) {
    loc.fail(n, err.what());
  }
  if (!e.true_path.empty()) {
    fs::path p(e.true_path);
    if (p.is_relative()) p = fs::path(base_dir) / p;
    try {
      e.true_matrix = load_array_label(p.string());
      validate_entry(e);
    } catch (const InputError &err) {
      loc.fail(n["true_val"], err.what());
    }
  }
  return e;
}

}  // namespace

Dataset parse_dataset(const std::string &yaml_text, const std::string &base_dir, const std::string &source) {
  const Located loc{source};
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception &e) {
    throw InputError(source + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                     ": YAML syntax error: " + e.msg);
  }
  YAML::Node list = root;
  if (root.IsMap()) {
    loc.check_keys(root, {"format", "entries"}, "dataset header");
    if (const auto f = root["format"]; f && loc.integer(f, "format") != kDatasetFormat)
      loc.fail(f, "unsupported dataset format " + f.Scalar() + " (this build reads format " +
                      std::to_string(kDatasetFormat) + ")");
    list = loc.required(root, "entries", "dataset header");
  }
  if (!list.IsSequence()) loc.fail(list, "dataset must be a list of entries");
  Dataset ds;
  ds.source = source;
  for (const auto &n : list) ds.entries.push_back(parse_entry(n, loc, base_dir));
  return ds;
}

Dataset load_dataset(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), fs::path(path).parent_path().string(), path);
}

std::string dump_dataset(const Dataset &ds) {
  YAML::Emitter out;
  out << YAML::BeginMap << YAML::Key << "format" << YAML::Value << kDatasetFormat;
  out << YAML::Key << "entries" << YAML::Value << YAML::BeginSeq;
  for (const auto &e : ds.entries) {
    out << YAML::BeginMap;
    out << YAML::Key << "type" << YAML::Value << entry_type_name(e.type);
    out << YAML::Key << "systems" << YAML::Value << YAML::BeginSeq;
    for (const auto &s : e.systems) {
      out << YAML::Flow << YAML::BeginMap << YAML::Key << "moldesc" << YAML::Value << YAML::DoubleQuoted << s.moldesc
          << YAML::Key << "basis" << YAML::Value << s.basis << YAML::Key << "charge" << YAML::Value << s.charge
          << YAML::Key << "spin" << YAML::Value << s.spin << YAML::EndMap;
    }
    out << YAML::EndSeq;
    if (e.true_scalar)
      out << YAML::Key << "true_val" << YAML::Value << detail::format_double(*e.true_scalar);
    else if (!e.true_path.empty())
      out << YAML::Key << "true_val" << YAML::Value << YAML::DoubleQuoted << e.true_path;
    out << YAML::Key << "weight" << YAML::Value << detail::format_double(e.weight);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---- array labels ----

namespace {

constexpr char kNpyMagic[] = "\x93NUMPY";

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open array file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Mat parse_npy(const std::string &buf, const std::string &path) {
  static_assert(std::endian::native == std::endian::little, "NPY reader assumes a little-endian host");
  auto bad = [&](const std::string &msg) { return InputError(path + ": " + msg); };
  if (buf.size() < 10) throw bad("truncated NPY header");
  if (buf[6] != 1 || buf[7] != 0)
    throw bad("unsupported NPY version " + std::to_string(int(buf[6])) + "." + std::to_string(int(buf[7])));
  const std::size_t hlen = static_cast<unsigned char>(buf[8]) | (static_cast<unsigned char>(buf[9]) << 8);
  if (buf.size() < 10 + hlen) throw bad("truncated NPY header");
  const std::string header = buf.substr(10, hlen);

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']*)')"))) throw bad("NPY header has no descr");
  const std::string descr = m[1];
  if (descr != "<f8") throw bad("unsupported dtype '" + descr + "' (need little-endian float64 '<f8')");
  if (!std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")))
    throw bad("NPY header has no fortran_order");
  const bool fortran = m[1] == "True";
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) throw bad("NPY header has no shape");
  std::vector<long> shape;
  const std::string dims = m[1];
  const std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it)
    shape.push_back(std::stol(it->str()));
  if (shape.size() > 2) throw bad("array has " + std::to_string(shape.size()) + " dimensions, expected at most 2");
  const long rows = shape.empty() ? 1 : shape[0];
  const long cols = shape.size() < 2 ? 1 : shape[1];

  const std::size_t need = static_cast<std::size_t>(rows * cols) * sizeof(double);
  const std::size_t have = buf.size() - 10 - hlen;
  if (have < need)
    throw bad("truncated payload: " + std::to_string(have) + " bytes, expected " + std::to_string(need));
  if (have > need) throw bad("payload has " + std::to_string(have - need) + " trailing bytes");
  std::vector<double> data(rows * cols);
  std::memcpy(data.data(), buf.data() + 10 + hlen, need);
  Mat out(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) out(i, j) = fortran ? data[j * rows + i] : data[i * cols + j];
  return out;
}

Mat parse_text_matrix(const std::string &buf, const std::string &path) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(buf);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    std::vector<double> row;
    for (auto t : toks) {
      try {
        row.push_back(detail::parse_double(t, line));
      } catch (const InputError &) {
        throw InputError(path + ":" + std::to_string(lineno) + ": malformed number '" + std::string(t) + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError(path + ":" + std::to_string(lineno) + ": row has " + std::to_string(row.size()) +
                       " values, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path + ": empty matrix file");
  Mat out(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j];
  return out;
}

}  // namespace

Mat load_array_label(const std::string &path) {
  const std::string buf = read_file(path);
  if (buf.compare(0, 6, kNpyMagic, 6) == 0) return parse_npy(buf, path);
  return parse_text_matrix(buf, path);
}

void save_npy(const std::string &path, const Mat &m) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(m.rows()) + ", " +
                       std::to_string(m.cols()) + "), }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(kNpyMagic, 6);
  const char ver[2] = {1, 0};
  out.write(ver, 2);
  const unsigned char len[2] = {static_cast<unsigned char>(header.size() & 0xff),
                                static_cast<unsigned char>(header.size() >> 8)};
  out.write(reinterpret_cast<const char *>(len), 2);
  out << header;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
  if (!out) throw InputError("failed writing '" + path + "'");
}

// ---- predictions ----

Engine::Engine(SCFOptions opts) : opts_(std::move(opts)) { opts_.validate(); }

const SCFSystem &Engine::system(const System &s, bool need_grid) {
  const auto key = s.key() + (need_grid ? "|grid" : "|nogrid");
  auto &slot = cache_[key];
  if (!slot) slot = std::make_unique<SCFSystem>(build_system(s.molecule(), s.basis, opts_.grid_level, need_grid));
  return *slot;
}

SCFSolution Engine::solve(const System &s, const HybridXC &h) {
  const auto &sys = system(s, h.needs_grid());
  auto sol = scf_solve(sys, h, opts_);
  if (!sol.converged)
    throw NumericalError("SCF did not converge for '" + s.moldesc + "' (charge " + std::to_string(s.charge) +
                         ", spin " + std::to_string(s.spin) + ") after " + std::to_string(sol.iterations) +
                         " iterations");
  return sol;
}

Prediction entry_prediction(const Entry &e, const HybridXC &h, Engine &engine) {
  try {
    switch (e.type) {
      case EntryType::ae: {
        double atoms = 0.0;
        for (std::size_t i = 1; i < e.systems.size(); ++i) atoms += engine.solve(e.systems[i], h).e_total;
        return atoms - engine.solve(e.systems[0], h).e_total;
      }
      case EntryType::ip:
        return engine.solve(e.systems[1], h).e_total - engine.solve(e.systems[0], h).e_total;
      case EntryType::dm:
        return engine.solve(e.systems[0], h).P_total();
      case EntryType::dens:
        throw NotImplementedError("dens entries are recognized but not supported (density-on-grid targets are "
                                  "outside the training scope)");
    }
  } catch (const NumericalError &err) {
    throw NumericalError(e.describe() + ": " + err.what());
  }
  throw InputError("bad entry type");
}

}  // namespace diffks
