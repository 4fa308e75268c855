#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "molgen/molgraph.hpp"
#include "molgen/molecule.hpp"

namespace molgen {

// Fraction of atoms whose bond-order sum equals their element's default
// valence. Throws on an empty molecule.
double atomic_stability(const BondedMolecule& bm);

// True iff every atom meets its default valence exactly.
bool molecular_stability(const BondedMolecule& bm);

// Sanity proxy: non-empty and every atom's bond-order sum is at most the
// maximum allowed valence of its element (S may reach 6). Intended to run on
// sanitized molecules (hydrogens completed, largest fragment kept).
bool validity(const BondedMolecule& bm);

// W1 between two scalar empirical distributions via the quantile-function
// integral. Equal sizes reduce to the mean |a_i - b_i| after sorting.
// Inputs need not be pre-sorted. Throws when either sample set is empty.
double wasserstein1(std::vector<double> a, std::vector<double> b);

struct CategoricalDist {
  std::vector<std::string> support;
  std::vector<double> prob;  // non-negative, sums to 1 (checked to 1e-9)

  void validate() const;
};

// 1/2 * sum |p_i - q_i| over the union of supports (missing labels read 0).
double total_variation(const CategoricalDist& p, const CategoricalDist& q);

struct MetricsReport {
  double tanimoto_mean_pct = 0.0;
  double stable_sanitized_pct = 0.0;
  double stable_atom_pct = 0.0;
  double valid_pct = 0.0;
  double valency_w1 = 0.0;
  double atoms_tv = 0.0;
  double bonds_tv = 0.0;
  double bond_len_w1 = 0.0;   // angstrom
  double bond_ang_w1 = 0.0;   // degrees
  double uniqueness_pct = 0.0;
  double avg_seconds_per_molecule = 0.0;
};

// Library-level aggregation against a seed molecule and a reference set.
// Distribution metrics pool atoms/bonds/angles across each set; empty
// molecules in `generated` count as unstable/invalid/zero-similarity and are
// excluded from the pools. Pool W1/TV values fall back to 0 when either side
// has no samples.
MetricsReport evaluate_library(const std::vector<BondedMolecule>& generated,
                               const BondedMolecule& seed,
                               const std::vector<BondedMolecule>& reference,
                               const std::vector<double>& timings);

// Distribution helpers (exposed for tests and the report tooling).
std::vector<double> bond_lengths(const BondedMolecule& bm);
std::vector<double> bond_angles_deg(const BondedMolecule& bm);
std::vector<double> valence_sums(const BondedMolecule& bm);
CategoricalDist element_distribution(const std::vector<BondedMolecule>& mols);
CategoricalDist bond_order_distribution(const std::vector<BondedMolecule>& mols);

// Serialization; both forms carry the repeat count and seed of the run.
std::string report_to_json(const MetricsReport& r, int repeats, uint64_t seed);
std::string report_to_table(const MetricsReport& r, int repeats, uint64_t seed);

}  // namespace molgen
