#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "molgen/molecule.hpp"

using namespace molgen;

TEST_CASE("vec3 arithmetic") {
  const Vec3 a{1.0, 2.0, 3.0};
  const Vec3 b{-1.0, 0.5, 2.0};
  CHECK((a + b).x == 0.0);
  CHECK((a - b).y == 1.5);
  CHECK((a * 2.0).z == 6.0);
  CHECK(a.dot(b) == doctest::Approx(6.0));
  const Vec3 c = a.cross(b);
  CHECK(c.dot(a) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.dot(b) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(Vec3{3.0, 4.0, 0.0}.norm() == doctest::Approx(5.0));
  CHECK(Vec3{0.0, 0.0, 2.0}.normalized().z == doctest::Approx(1.0));
  CHECK(distance({0, 0, 0}, {1, 2, 2}) == doctest::Approx(3.0));
}

TEST_CASE("xyz round trip") {
  Molecule mol;
  mol.atoms = {{Element::C, {0.0, 0.0, 0.0}},
               {Element::O, {1.2, 0.0, 0.0}},
               {Element::H, {-0.6, 0.9, 0.0}}};
  const std::string text = write_xyz(mol, "test comment");
  const Molecule back = parse_xyz(text);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.atoms[i].element == mol.atoms[i].element);
    CHECK(back.atoms[i].position.x ==
          doctest::Approx(mol.atoms[i].position.x).epsilon(1e-9));
    CHECK(back.atoms[i].position.y ==
          doctest::Approx(mol.atoms[i].position.y).epsilon(1e-9));
  }
}

TEST_CASE("xyz parser reports malformed input") {
  CHECK_THROWS_AS(parse_xyz("not a number\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_xyz("2\ncomment\nC 0 0 0\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_xyz("1\ncomment\nXx 0 0 0\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_xyz("1\ncomment\nC 0 zero 0\n"), std::runtime_error);
}

TEST_CASE("centroid averages positions") {
  Molecule mol;
  mol.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {2, 4, 6}}};
  const Vec3 c = mol.centroid();
  CHECK(c.x == doctest::Approx(1.0));
  CHECK(c.y == doctest::Approx(2.0));
  CHECK(c.z == doctest::Approx(3.0));
}

TEST_CASE("validate_molecule rejects overlapping atoms") {
  Molecule ok;
  ok.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {1.5, 0, 0}}};
  CHECK_NOTHROW(validate_molecule(ok));
  Molecule bad;
  bad.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {0.05, 0, 0}}};
  CHECK_THROWS_AS(validate_molecule(bad), std::invalid_argument);
}

TEST_CASE("validate_bonded rejects malformed bond lists") {
  BondedMolecule bm;
  bm.molecule.atoms = {{Element::C, {0, 0, 0}}, {Element::O, {1.4, 0, 0}}};
  bm.bonds = {{0, 1, 1}};
  CHECK_NOTHROW(validate_bonded(bm));

  BondedMolecule self = bm;
  self.bonds = {{1, 1, 1}};
  CHECK_THROWS_AS(validate_bonded(self), std::invalid_argument);

  BondedMolecule reversed = bm;
  reversed.bonds = {{1, 0, 1}};
  CHECK_THROWS_AS(validate_bonded(reversed), std::invalid_argument);

  BondedMolecule range = bm;
  range.bonds = {{0, 2, 1}};
  CHECK_THROWS_AS(validate_bonded(range), std::invalid_argument);

  BondedMolecule dup = bm;
  dup.bonds = {{0, 1, 1}, {0, 1, 2}};
  CHECK_THROWS_AS(validate_bonded(dup), std::invalid_argument);

  BondedMolecule order = bm;
  order.bonds = {{0, 1, 4}};
  CHECK_THROWS_AS(validate_bonded(order), std::invalid_argument);
}

TEST_CASE("valence_counts sums bond orders per atom") {
  BondedMolecule bm;
  bm.molecule.atoms = {{Element::C, {0, 0, 0}},
                       {Element::O, {1.2, 0, 0}},
                       {Element::O, {-1.2, 0, 0}}};
  bm.bonds = {{0, 1, 2}, {0, 2, 2}};
  const auto v = bm.valence_counts();
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 4);
  CHECK(v[1] == 2);
  CHECK(v[2] == 2);
}

TEST_CASE("bonded json round trip") {
  BondedMolecule bm;
  bm.molecule.atoms = {{Element::N, {0.1, -0.2, 0.3}},
                       {Element::C, {1.4, 0.0, 0.0}},
                       {Element::H, {-0.4, 0.8, 0.2}}};
  bm.bonds = {{0, 1, 3}, {0, 2, 1}};
  const BondedMolecule back = bonded_from_json(bonded_to_json(bm));
  REQUIRE(back.molecule.size() == 3);
  REQUIRE(back.bonds.size() == 2);
  CHECK(back.molecule.atoms[0].element == Element::N);
  CHECK(back.molecule.atoms[0].position.y == doctest::Approx(-0.2));
  CHECK(back.bonds[0].order == 3);
  CHECK(back.bonds[1].j == 2);

  BondedMolecule empty;
  const BondedMolecule empty_back = bonded_from_json(bonded_to_json(empty));
  CHECK(empty_back.molecule.empty());
  CHECK(empty_back.bonds.empty());
}

TEST_CASE("element tables") {
  CHECK(element_symbol(Element::Cl) == "Cl");
  CHECK(*element_from_symbol("Br") == Element::Br);
  CHECK_FALSE(element_from_symbol("Xx").has_value());
  CHECK(default_valence(Element::C) == 4);
  CHECK(default_valence(Element::S) == 2);
  CHECK(max_allowed_valence(Element::S) == 6);
  CHECK(covalent_radius(Element::H) == doctest::Approx(0.32));
  CHECK(atomic_mass(Element::O) > atomic_mass(Element::N));
}
