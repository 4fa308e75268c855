#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "molgen/molgraph.hpp"

using namespace molgen;

namespace {

Molecule pair_at(Element a, Element b, double d) {
  Molecule mol;
  mol.atoms = {{a, {0, 0, 0}}, {b, {d, 0, 0}}};
  return mol;
}

int single_bond_order(Element a, Element b, double d) {
  const BondedMolecule bm = infer_bonds(pair_at(a, b, d));
  return bm.bonds.empty() ? 0 : bm.bonds[0].order;
}

}  // namespace

TEST_CASE("bond order classification follows the distance margins") {
  // C-C covalent radii sum to 1.54
  CHECK(single_bond_order(Element::C, Element::C, 1.20) == 3);
  CHECK(single_bond_order(Element::C, Element::C, 1.29) == 3);
  CHECK(single_bond_order(Element::C, Element::C, 1.33) == 2);
  CHECK(single_bond_order(Element::C, Element::C, 1.39) == 2);
  CHECK(single_bond_order(Element::C, Element::C, 1.54) == 1);
  CHECK(single_bond_order(Element::C, Element::C, 1.94) == 1);
  CHECK(single_bond_order(Element::C, Element::C, 1.95) == 0);
  // C-O sum 1.50
  CHECK(single_bond_order(Element::C, Element::O, 1.43) == 1);
  CHECK(single_bond_order(Element::C, Element::O, 1.30) == 2);
  CHECK(single_bond_order(Element::C, Element::O, 1.21) == 3);
}

TEST_CASE("inferred bonds are i<j and cover all close pairs") {
  Molecule mol;
  mol.atoms = {{Element::C, {0, 0, 0}},
               {Element::C, {1.5, 0, 0}},
               {Element::O, {3.6, 0, 0}},
               {Element::H, {-1.09, 0, 0}}};
  const BondedMolecule bm = infer_bonds(mol);
  REQUIRE(bm.bonds.size() == 2);  // C-C and C-H; O is isolated
  for (const Bond& b : bm.bonds) CHECK(b.i < b.j);
  CHECK_NOTHROW(validate_bonded(bm));
}

TEST_CASE("hydrogen completion fills carbon to four") {
  Molecule mol;
  mol.atoms = {{Element::C, {2, 2, 2}}};
  const AddHydrogensResult res = add_hydrogens(infer_bonds(mol));
  CHECK(res.hydrogens_added == 4);
  CHECK(res.over_valence_atoms.empty());
  REQUIRE(res.molecule.molecule.size() == 5);
  int hydrogens = 0;
  for (const Atom& a : res.molecule.molecule.atoms)
    if (a.element == Element::H) ++hydrogens;
  CHECK(hydrogens == 4);
  // every H sits at the standard bond length from the carbon
  for (size_t i = 1; i < 5; ++i)
    CHECK(distance(res.molecule.molecule.atoms[i].position,
                   mol.atoms[0].position) ==
          doctest::Approx(kHydrogenBondLength).epsilon(1e-9));
  // hydrogens get spread out, not clumped
  double min_hh = 1e9;
  for (size_t i = 1; i < 5; ++i)
    for (size_t j = i + 1; j < 5; ++j)
      min_hh = std::min(min_hh,
                        distance(res.molecule.molecule.atoms[i].position,
                                 res.molecule.molecule.atoms[j].position));
  CHECK(min_hh > 1.4);
  // the completed molecule is fully stable: CH4
  const auto v = res.molecule.valence_counts();
  CHECK(v[0] == 4);
}

TEST_CASE("hydrogen completion flags over-valent atoms") {
  // carbon with five neighbours within bonding distance
  Molecule mol;
  mol.atoms = {{Element::C, {0, 0, 0}},      {Element::O, {1.45, 0, 0}},
               {Element::O, {-1.45, 0, 0}},  {Element::O, {0, 1.45, 0}},
               {Element::O, {0, -1.45, 0}},  {Element::O, {0, 0, 1.45}}};
  const AddHydrogensResult res = add_hydrogens(infer_bonds(mol));
  CHECK_FALSE(res.over_valence_atoms.empty());
  CHECK(std::find(res.over_valence_atoms.begin(), res.over_valence_atoms.end(),
                  0) != res.over_valence_atoms.end());
}

TEST_CASE("largest fragment picks by size, mass, then first index") {
  Molecule mol;
  // fragment A: C-C at x<0; fragment B: O-O at x>0 (same atom count,
  // oxygen is heavier)
  mol.atoms = {{Element::C, {-5, 0, 0}},
               {Element::C, {-3.6, 0, 0}},
               {Element::O, {3.0, 0, 0}},
               {Element::O, {4.4, 0, 0}}};
  const BondedMolecule frag = largest_fragment(infer_bonds(mol));
  REQUIRE(frag.molecule.size() == 2);
  CHECK(frag.molecule.atoms[0].element == Element::O);

  // a strictly larger fragment wins regardless of mass
  Molecule mol2;
  mol2.atoms = {{Element::C, {-6.4, 0, 0}},
                {Element::C, {-5, 0, 0}},
                {Element::C, {-3.6, 0, 0}},
                {Element::Br, {5, 0, 0}}};
  const BondedMolecule frag2 = largest_fragment(infer_bonds(mol2));
  CHECK(frag2.molecule.size() == 3);
  CHECK(frag2.bonds.size() == 2);

  CHECK_THROWS_AS(largest_fragment(BondedMolecule{}), std::invalid_argument);
}

TEST_CASE("connected components counts fragments") {
  Molecule mol;
  mol.atoms = {{Element::C, {0, 0, 0}},
               {Element::C, {1.5, 0, 0}},
               {Element::O, {6, 0, 0}},
               {Element::N, {9, 0, 0}}};
  const auto comps = connected_components(infer_bonds(mol));
  CHECK(comps.size() == 3);
}

TEST_CASE("fingerprint is deterministic and graph-sensitive") {
  Molecule ethane;
  ethane.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {1.5, 0, 0}}};
  Molecule ethene;
  ethene.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {1.33, 0, 0}}};
  const Fingerprint fa = fingerprint(infer_bonds(ethane));
  const Fingerprint fb = fingerprint(infer_bonds(ethane));
  const Fingerprint fc = fingerprint(infer_bonds(ethene));
  CHECK(fa == fb);
  CHECK_FALSE(fa == fc);  // bond order is part of the path token stream
  CHECK(fa.popcount() > 0);
}

TEST_CASE("fingerprint ignores geometry given the same graph") {
  Molecule a;
  a.atoms = {{Element::C, {0, 0, 0}}, {Element::O, {1.4, 0, 0}}};
  Molecule b;
  b.atoms = {{Element::O, {7, 3, 1}}, {Element::C, {7, 3, 2.4}}};  // permuted
  CHECK(fingerprint(infer_bonds(a)) == fingerprint(infer_bonds(b)));
}

TEST_CASE("tanimoto basics") {
  Fingerprint a, b;
  CHECK(tanimoto(a, b) == 1.0);  // both empty
  a.set(3);
  a.set(100);
  CHECK(tanimoto(a, a) == 1.0);
  CHECK(tanimoto(a, b) == 0.0);
  b.set(3);
  CHECK(tanimoto(a, b) == doctest::Approx(0.5));
  b.set(200);
  CHECK(tanimoto(a, b) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("graph hash is permutation invariant and structure sensitive") {
  Molecule a;
  a.atoms = {{Element::C, {0, 0, 0}},
             {Element::O, {1.4, 0, 0}},
             {Element::N, {-1.4, 0, 0}}};
  Molecule b;  // same molecule, atoms listed in a different order, shifted
  b.atoms = {{Element::N, {8.6, 1, 1}},
             {Element::C, {10, 1, 1}},
             {Element::O, {11.4, 1, 1}}};
  CHECK(graph_hash(infer_bonds(a)) == graph_hash(infer_bonds(b)));

  Molecule c;  // different element in the same topology
  c.atoms = {{Element::C, {0, 0, 0}},
             {Element::O, {1.4, 0, 0}},
             {Element::O, {-1.4, 0, 0}}};
  CHECK(graph_hash(infer_bonds(a)) != graph_hash(infer_bonds(c)));

  // single vs double bond changes the hash
  Molecule d;
  d.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {1.5, 0, 0}}};
  Molecule e;
  e.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {1.33, 0, 0}}};
  CHECK(graph_hash(infer_bonds(d)) != graph_hash(infer_bonds(e)));
}

TEST_CASE("fnv1a64 matches the reference constants") {
  // reference values for the canonical 64-bit FNV-1a
  CHECK(fnv1a64("", 0) == 14695981039346656037ULL);
  CHECK(fnv1a64("a", 1) == 12638187200555641996ULL);
  CHECK(fnv1a64("foobar", 6) == 9625390261332436968ULL);
}
