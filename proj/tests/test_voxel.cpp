#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "molgen/rng.hpp"
#include "molgen/voxel.hpp"

using namespace molgen;

namespace {

GridSpec desk_grid() { return GridSpec{}; }  // 32^3, 0.25 A, all channels

}  // namespace

TEST_CASE("grid spec invariants") {
  GridSpec spec = desk_grid();
  CHECK(spec.num_channels() == 8);
  CHECK(spec.voxels_per_channel() == 32 * 32 * 32);
  CHECK(spec.extent() == doctest::Approx(8.0));
  CHECK(spec.grid_center() == doctest::Approx(4.0));
  CHECK_NOTHROW(spec.validate());
  GridSpec bad = spec;
  bad.spacing = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("voxelize writes the analytic gaussian bump") {
  GridSpec spec = desk_grid();
  Molecule mol;
  // place the atom exactly at a voxel center: voxel 16 center = 4.125
  const double c = (16 + 0.5) * spec.spacing;
  mol.atoms = {{Element::C, {c, c, c}}};
  const VoxelGrid grid = voxelize(mol, spec);
  const int ch = spec.channel_of(Element::C);
  CHECK(grid.at(ch, 16, 16, 16) == doctest::Approx(1.0).epsilon(1e-12));
  // one voxel away along x: d = 0.25, value = exp(-d^2 / (2 r^2))
  const double expect =
      std::exp(-(0.25 * 0.25) / (2.0 * spec.atom_radius * spec.atom_radius));
  CHECK(grid.at(ch, 17, 16, 16) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(grid.at(ch, 15, 16, 16) == doctest::Approx(expect).epsilon(1e-12));
  // beyond the 4r cutoff the density is exactly zero
  CHECK(grid.at(ch, 16 + 5, 16, 16) == 0.0);
  // other channels untouched
  CHECK(grid.at(spec.channel_of(Element::O), 16, 16, 16) == 0.0);
}

TEST_CASE("overlapping same-element atoms combine with max, not sum") {
  GridSpec spec = desk_grid();
  Molecule mol;
  const double c = (16 + 0.5) * spec.spacing;
  mol.atoms = {{Element::C, {c - 0.25, c, c}}, {Element::C, {c + 0.25, c, c}}};
  const VoxelGrid grid = voxelize(mol, spec);
  const int ch = spec.channel_of(Element::C);
  // the voxel midway between the two atoms sees two equal contributions
  const double one =
      std::exp(-(0.25 * 0.25) / (2.0 * spec.atom_radius * spec.atom_radius));
  CHECK(grid.at(ch, 16, 16, 16) == doctest::Approx(one).epsilon(1e-12));
  CHECK(grid.at(ch, 16, 16, 16) < 1.0);
}

TEST_CASE("voxelize rejects atoms outside the margin") {
  GridSpec spec = desk_grid();
  Molecule mol;
  mol.atoms = {{Element::C, {0.1, 4.0, 4.0}}};  // inside 2r = 0.5 margin
  CHECK_THROWS_AS(voxelize(mol, spec), std::invalid_argument);
}

TEST_CASE("center_in_grid moves the centroid to the box center") {
  GridSpec spec = desk_grid();
  Molecule mol;
  mol.atoms = {{Element::C, {10, 10, 10}}, {Element::O, {12, 10, 10}}};
  const Molecule centered = center_in_grid(mol, spec);
  const Vec3 c = centered.centroid();
  CHECK(c.x == doctest::Approx(4.0));
  CHECK(c.y == doctest::Approx(4.0));
  CHECK(c.z == doctest::Approx(4.0));
  // relative geometry preserved
  CHECK(distance(centered.atoms[0].position, centered.atoms[1].position) ==
        doctest::Approx(2.0));
}

TEST_CASE("find_peaks recovers atom positions to sub-voxel accuracy") {
  GridSpec spec = desk_grid();
  Molecule mol;
  // off-center positions, not aligned to voxel centers
  mol.atoms = {{Element::C, {3.37, 4.02, 4.61}},
               {Element::O, {4.93, 3.71, 3.55}},
               {Element::N, {3.11, 5.25, 3.12}}};
  const VoxelGrid grid = voxelize(mol, spec);
  const Molecule peaks = find_peaks(grid, 0.3);
  REQUIRE(peaks.size() == 3);
  // match each input atom to the nearest recovered peak of the same element
  for (const Atom& a : mol.atoms) {
    double best = 1e9;
    for (const Atom& p : peaks.atoms)
      if (p.element == a.element)
        best = std::min(best, distance(p.position, a.position));
    CHECK(best < 0.02);
  }
}

TEST_CASE("find_peaks threshold suppresses weak maxima") {
  GridSpec spec = desk_grid();
  Molecule mol;
  mol.atoms = {{Element::C, {4.07, 3.98, 4.03}}};
  VoxelGrid grid = voxelize(mol, spec);
  CHECK(find_peaks(grid, 0.3).size() == 1);
  // scale the channel so the densest voxel (~0.83) drops to ~0.25
  for (double& v : grid.data) v *= 0.3;
  CHECK(find_peaks(grid, 0.3).empty());
  CHECK(find_peaks(grid, 0.2).size() == 1);
}

TEST_CASE("rotation matrices are orthonormal with determinant one") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat3 m = random_rotation(rng);
    // rows orthonormal
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += m[i][k] * m[j][k];
        CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
      }
    }
    const double det =
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
        m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
        m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rigid transforms preserve pairwise distances") {
  Rng rng(17);
  Molecule mol;
  mol.atoms = {{Element::C, {4.0, 4.0, 4.0}},
               {Element::O, {5.2, 4.0, 4.0}},
               {Element::N, {4.0, 5.4, 4.4}}};
  for (int trial = 0; trial < 20; ++trial) {
    const Molecule moved = random_rigid_transform(mol, rng, 0.5);
    for (size_t i = 0; i < mol.size(); ++i)
      for (size_t j = i + 1; j < mol.size(); ++j)
        CHECK(distance(moved.atoms[i].position, moved.atoms[j].position) ==
              doctest::Approx(
                  distance(mol.atoms[i].position, mol.atoms[j].position))
                  .epsilon(1e-9));
  }
}

TEST_CASE("rotation happens about the centroid") {
  Rng rng(23);
  Molecule mol;
  mol.atoms = {{Element::C, {3.0, 4.0, 4.0}}, {Element::C, {5.0, 4.0, 4.0}}};
  const Molecule moved = apply_rigid_transform(mol, random_rotation(rng),
                                               {0.0, 0.0, 0.0});
  const Vec3 c = moved.centroid();
  CHECK(c.x == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(c.y == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(c.z == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("grid file round trip") {
  GridSpec spec = desk_grid();
  Molecule mol;
  mol.atoms = {{Element::S, {3.9, 4.1, 4.0}}, {Element::F, {5.1, 3.8, 4.2}}};
  const VoxelGrid grid = voxelize(mol, spec);
  const std::string path =
      (std::filesystem::temp_directory_path() / "roundtrip.vxg").string();
  save_grid(grid, path);
  const VoxelGrid back = load_grid(path, spec.atom_radius);
  CHECK(back.spec == grid.spec);
  REQUIRE(back.data.size() == grid.data.size());
  double max_err = 0.0;
  for (size_t i = 0; i < grid.data.size(); ++i)
    max_err = std::max(max_err, std::abs(back.data[i] - grid.data[i]));
  CHECK(max_err < 1e-6);  // stored as float32
  std::filesystem::remove(path);
}
