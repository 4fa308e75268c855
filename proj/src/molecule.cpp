#include "molgen/molecule.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace molgen {

Vec3 Molecule::centroid() const {
  Vec3 c;
  if (atoms.empty()) return c;
  for (const auto& a : atoms) c += a.position;
  return c * (1.0 / static_cast<double>(atoms.size()));
}

std::vector<int> BondedMolecule::valence_counts() const {
  std::vector<int> counts(molecule.size(), 0);
  for (const auto& b : bonds) {
    counts[b.i] += b.order;
    counts[b.j] += b.order;
  }
  return counts;
}

void validate_molecule(const Molecule& mol) {
  const size_t n = mol.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (distance(mol.atoms[i].position, mol.atoms[j].position) <= 0.1) {
        throw std::invalid_argument("atoms " + std::to_string(i) + " and " +
                                    std::to_string(j) +
                                    " are closer than 0.1 A");
      }
    }
  }
}

void validate_bonded(const BondedMolecule& bm) {
  validate_molecule(bm.molecule);
  const int n = static_cast<int>(bm.molecule.size());
  std::set<std::pair<int, int>> seen;
  for (const auto& b : bm.bonds) {
    if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n)
      throw std::invalid_argument("bond endpoint out of range");
    if (b.i == b.j) throw std::invalid_argument("self-loop bond");
    if (b.i >= b.j) throw std::invalid_argument("bond indices must satisfy i < j");
    if (b.order < 1 || b.order > 3)
      throw std::invalid_argument("bond order must be 1, 2 or 3");
    if (!seen.insert({b.i, b.j}).second)
      throw std::invalid_argument("duplicate bond");
  }
}

// --- XYZ ------------------------------------------------------------------

namespace {

[[noreturn]] void xyz_error(size_t line, const std::string& what) {
  throw std::runtime_error("xyz parse error at line " + std::to_string(line) +
                           ": " + what);
}

}  // namespace

Molecule parse_xyz(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;

  if (!std::getline(in, line)) xyz_error(1, "missing atom count line");
  ++lineno;
  long count = -1;
  try {
    size_t pos = 0;
    count = std::stol(line, &pos);
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos != line.size()) xyz_error(lineno, "trailing characters after atom count");
  } catch (const std::logic_error&) {
    xyz_error(lineno, "malformed atom count '" + line + "'");
  }
  if (count < 0) xyz_error(lineno, "negative atom count");

  // Comment line (may be absent only for a zero-atom file at EOF).
  if (!std::getline(in, line) && count > 0) xyz_error(2, "missing comment line");
  ++lineno;

  Molecule mol;
  mol.atoms.reserve(static_cast<size_t>(count));
  for (long k = 0; k < count; ++k) {
    if (!std::getline(in, line)) xyz_error(lineno + 1, "unexpected end of file");
    ++lineno;
    std::istringstream row(line);
    std::string symbol;
    double x, y, z;
    if (!(row >> symbol)) xyz_error(lineno, "empty atom row");
    const auto el = element_from_symbol(symbol);
    if (!el) xyz_error(lineno, "unknown element symbol '" + symbol + "'");
    if (!(row >> x >> y >> z)) xyz_error(lineno, "non-numeric coordinate");
    mol.atoms.push_back({*el, {x, y, z}});
  }
  return mol;
}

std::string write_xyz(const Molecule& mol, const std::string& comment) {
  std::ostringstream out;
  out << mol.size() << "\n" << comment << "\n";
  char buf[96];
  for (const auto& a : mol.atoms) {
    std::snprintf(buf, sizeof(buf), "%s %.10f %.10f %.10f\n",
                  std::string(element_symbol(a.element)).c_str(), a.position.x,
                  a.position.y, a.position.z);
    out << buf;
  }
  return out.str();
}

Molecule load_xyz_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open xyz file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_xyz(buf.str());
}

void save_xyz_file(const Molecule& mol, const std::string& path,
                   const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write xyz file: " + path);
  out << write_xyz(mol, comment);
}

// --- JSON -------------------------------------------------------------------

std::string bonded_to_json(const BondedMolecule& bm) {
  nlohmann::json j;
  j["atoms"] = nlohmann::json::array();
  for (const auto& a : bm.molecule.atoms) {
    j["atoms"].push_back({{"el", std::string(element_symbol(a.element))},
                          {"x", a.position.x},
                          {"y", a.position.y},
                          {"z", a.position.z}});
  }
  j["bonds"] = nlohmann::json::array();
  for (const auto& b : bm.bonds) j["bonds"].push_back({b.i, b.j, b.order});
  return j.dump();
}

BondedMolecule bonded_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  BondedMolecule bm;
  for (const auto& ja : j.at("atoms")) {
    const auto el = element_from_symbol(ja.at("el").get<std::string>());
    if (!el) throw std::runtime_error("unknown element in bonded json");
    bm.molecule.atoms.push_back(
        {*el, {ja.at("x").get<double>(), ja.at("y").get<double>(),
               ja.at("z").get<double>()}});
  }
  for (const auto& jb : j.at("bonds")) {
    bm.bonds.push_back({jb.at(0).get<int>(), jb.at(1).get<int>(),
                        jb.at(2).get<int>()});
  }
  return bm;
}

void save_bonded_json(const BondedMolecule& bm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write json file: " + path);
  out << bonded_to_json(bm) << "\n";
}

BondedMolecule load_bonded_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open json file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return bonded_from_json(buf.str());
}

}  // namespace molgen
