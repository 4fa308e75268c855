#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "molgen/elements.hpp"

namespace molgen {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

struct Atom {
  Element element = Element::C;
  Vec3 position;  // angstrom
};

struct Molecule {
  std::vector<Atom> atoms;

  size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
  Vec3 centroid() const;
};

struct Bond {
  int i = 0;  // i < j
  int j = 0;
  int order = 1;  // 1, 2 or 3
};

struct BondedMolecule {
  Molecule molecule;
  std::vector<Bond> bonds;

  // Sum of bond orders incident to each atom.
  std::vector<int> valence_counts() const;
};

// Throws std::invalid_argument if an invariant is violated: element outside
// the vocabulary is impossible by construction, so this checks coordinates
// (min pairwise distance > 0.1 A) and, for bonded molecules, bond indices,
// i < j ordering, duplicates and self-loops.
void validate_molecule(const Molecule& mol);
void validate_bonded(const BondedMolecule& bm);

// --- XYZ I/O ------------------------------------------------------------

// Parses standard XYZ text (count line, comment line, "El x y z" rows).
// Parse failures throw std::runtime_error naming the 1-based line number.
Molecule parse_xyz(const std::string& text);

std::string write_xyz(const Molecule& mol, const std::string& comment = "");

Molecule load_xyz_file(const std::string& path);
void save_xyz_file(const Molecule& mol, const std::string& path,
                   const std::string& comment = "");

// --- Bonded-molecule JSON -------------------------------------------------
// {"atoms":[{"el":"C","x":..,"y":..,"z":..},...], "bonds":[[i,j,order],...]}

std::string bonded_to_json(const BondedMolecule& bm);
BondedMolecule bonded_from_json(const std::string& json_text);

void save_bonded_json(const BondedMolecule& bm, const std::string& path);
BondedMolecule load_bonded_json(const std::string& path);

}  // namespace molgen
