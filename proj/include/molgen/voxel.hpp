#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "molgen/molecule.hpp"
#include "molgen/rng.hpp"

namespace molgen {

struct GridSpec {
  int edge_length = 32;      // voxels per axis (l)
  double spacing = 0.25;     // angstrom per voxel
  std::vector<Element> channels{kAllElements.begin(), kAllElements.end()};
  double atom_radius = 0.25; // gaussian sigma, angstrom

  int num_channels() const { return static_cast<int>(channels.size()); }
  size_t voxels_per_channel() const {
    const size_t l = static_cast<size_t>(edge_length);
    return l * l * l;
  }
  // Physical edge, angstrom. Voxel (i,j,k) center sits at ((i+0.5)*spacing, ...).
  double extent() const { return edge_length * spacing; }
  double grid_center() const { return 0.5 * extent(); }

  int channel_of(Element e) const;  // -1 if the element is not mapped
  void validate() const;            // l >= 8, spacing > 0, channels unique
  bool operator==(const GridSpec&) const = default;
};

struct VoxelGrid {
  GridSpec spec;
  std::vector<double> data;  // [c][x][y][z], values in [0,1]

  VoxelGrid() = default;
  explicit VoxelGrid(const GridSpec& s)
      : spec(s), data(s.channels.size() * s.voxels_per_channel(), 0.0) {}

  double& at(int c, int x, int y, int z) {
    const int l = spec.edge_length;
    return data[((static_cast<size_t>(c) * l + x) * l + y) * l + z];
  }
  double at(int c, int x, int y, int z) const {
    const int l = spec.edge_length;
    return data[((static_cast<size_t>(c) * l + x) * l + y) * l + z];
  }
};

// Renders each atom as a gaussian density bump on its element channel:
// value(p) = max over same-element atoms of exp(-|p - pos|^2 / (2 r^2)),
// truncated to 0 beyond 4r. Atom coordinates are taken in the grid frame
// ([0, l*spacing] per axis); an atom closer than 2r to the boundary is an
// error naming the atom. Use center_in_grid first for molecules in
// arbitrary frames.
VoxelGrid voxelize(const Molecule& mol, const GridSpec& spec);

// Translates the molecule so its centroid sits at the grid center.
Molecule center_in_grid(const Molecule& mol, const GridSpec& spec);

// Recovers atoms from a density grid. Per channel, voxels >= threshold that
// are strict maxima of their 3x3x3 neighborhood are refined to sub-voxel
// coordinates with damped Newton steps on a local quadratic fit of the
// log-density, then same-channel peaks closer than 0.5*spacing are merged.
Molecule find_peaks(const VoxelGrid& grid, double threshold = 0.3,
                    int max_refine_iters = 8);

// --- Rigid transforms -----------------------------------------------------

using Mat3 = std::array<std::array<double, 3>, 3>;

// Rotation matrix from a unit quaternion (w,x,y,z).
Mat3 quaternion_rotation_matrix(const std::array<double, 4>& q);

// Marsaglia method: 4 iid normals normalized, uniform on SO(3).
Mat3 random_rotation(Rng& rng);

Molecule apply_rigid_transform(const Molecule& mol, const Mat3& rotation,
                               const Vec3& translation);

// Uniform random rotation about the centroid plus a translation with each
// component uniform in [-max_translation, max_translation].
Molecule random_rigid_transform(const Molecule& mol, Rng& rng,
                                double max_translation);

// --- Serialization -----------------------------------------------------------
// 16-byte header: magic "VXG1", u32 c, u32 l, u32 spacing in micro-angstrom,
// then c*l^3 little-endian float32 in [c][x][y][z] order.

void save_grid(const VoxelGrid& grid, const std::string& path);
VoxelGrid load_grid(const std::string& path, double atom_radius = 0.25);

}  // namespace molgen
