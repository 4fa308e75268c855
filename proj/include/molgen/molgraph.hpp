#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "molgen/molecule.hpp"

namespace molgen {

// --- Bond inference ---------------------------------------------------------

// Distance heuristic over the shipped covalent-radius table: a single bond
// (i,j) exists iff dist <= r_cov(i) + r_cov(j) + 0.4 A; the order is upgraded
// to 2 when dist <= sum - 0.15 and to 3 when dist <= sum - 0.25.
BondedMolecule infer_bonds(const Molecule& mol);

// --- Hydrogen completion ----------------------------------------------------

struct AddHydrogensResult {
  BondedMolecule molecule;
  int hydrogens_added = 0;
  // Indices (into the input molecule) of atoms whose bond-order sum already
  // exceeded their default valence; those are left unchanged.
  std::vector<int> over_valence_atoms;
};

// Fills each heavy atom's valence deficit with hydrogens at 1.09 A, choosing
// directions greedily to maximize the minimum angle to existing bonds.
// Heavy-atom positions and existing bonds are never modified.
AddHydrogensResult add_hydrogens(const BondedMolecule& bm);

// --- Fragments ---------------------------------------------------------------

// Connected component with the most atoms; ties broken by larger total
// atomic mass, then by lowest first atom index. Throws on empty input.
BondedMolecule largest_fragment(const BondedMolecule& bm);

// All connected components, each with reindexed bonds (test oracle helper).
std::vector<BondedMolecule> connected_components(const BondedMolecule& bm);

// --- Fingerprints -------------------------------------------------------------

inline constexpr int kFingerprintBits = 2048;

struct Fingerprint {
  std::array<uint64_t, kFingerprintBits / 64> words{};

  void set(int bit) { words[bit >> 6] |= (1ULL << (bit & 63)); }
  bool test(int bit) const { return (words[bit >> 6] >> (bit & 63)) & 1; }
  int popcount() const;
  bool operator==(const Fingerprint&) const = default;
};

// Path fingerprint: all simple paths of 0..7 bonds, each canonicalized as the
// (element, order, element, ...) token sequence read in the lexicographically
// smaller direction, hashed with FNV-1a 64 into 2048 bits.
Fingerprint fingerprint(const BondedMolecule& bm);

// popcount(a AND b) / popcount(a OR b); 1.0 when both fingerprints are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

// FNV-1a 64-bit, the fixed hash used for fingerprints and graph hashing.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 14695981039346656037ULL);

// Canonical graph hash via 3 rounds of neighborhood-refinement coloring;
// used by the uniqueness metric. Ignores coordinates.
uint64_t graph_hash(const BondedMolecule& bm);

}  // namespace molgen
