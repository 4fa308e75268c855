#include "molgen/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace molgen {

int GridSpec::channel_of(Element e) const {
  for (size_t c = 0; c < channels.size(); ++c)
    if (channels[c] == e) return static_cast<int>(c);
  return -1;
}

void GridSpec::validate() const {
  if (edge_length < 8) throw std::invalid_argument("grid edge_length must be >= 8");
  if (spacing <= 0.0) throw std::invalid_argument("grid spacing must be > 0");
  if (atom_radius <= 0.0) throw std::invalid_argument("atom_radius must be > 0");
  if (channels.empty()) throw std::invalid_argument("grid needs >= 1 channel");
  std::set<Element> unique(channels.begin(), channels.end());
  if (unique.size() != channels.size())
    throw std::invalid_argument("grid channels must be unique");
}

VoxelGrid voxelize(const Molecule& mol, const GridSpec& spec) {
  spec.validate();
  VoxelGrid grid(spec);
  const double s = spec.spacing;
  const double r = spec.atom_radius;
  const double cutoff = 4.0 * r;
  const double inv_two_r2 = 1.0 / (2.0 * r * r);
  const int l = spec.edge_length;

  for (size_t a = 0; a < mol.size(); ++a) {
    const Atom& atom = mol.atoms[a];
    const int ch = spec.channel_of(atom.element);
    if (ch < 0)
      throw std::invalid_argument("atom " + std::to_string(a) +
                                  ": element not in grid channels");
    const Vec3& p = atom.position;
    const double margin = 2.0 * r;
    if (p.x < margin || p.y < margin || p.z < margin ||
        p.x > spec.extent() - margin || p.y > spec.extent() - margin ||
        p.z > spec.extent() - margin) {
      throw std::invalid_argument("atom " + std::to_string(a) +
                                  " lies outside the grid margin");
    }
    // Local stencil: voxel centers within the truncation radius.
    const int x0 = std::max(0, static_cast<int>(std::floor((p.x - cutoff) / s - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor((p.y - cutoff) / s - 0.5)));
    const int z0 = std::max(0, static_cast<int>(std::floor((p.z - cutoff) / s - 0.5)));
    const int x1 = std::min(l - 1, static_cast<int>(std::ceil((p.x + cutoff) / s - 0.5)));
    const int y1 = std::min(l - 1, static_cast<int>(std::ceil((p.y + cutoff) / s - 0.5)));
    const int z1 = std::min(l - 1, static_cast<int>(std::ceil((p.z + cutoff) / s - 0.5)));
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5) * s - p.x;
      for (int y = y0; y <= y1; ++y) {
        const double dy = (y + 0.5) * s - p.y;
        for (int z = z0; z <= z1; ++z) {
          const double dz = (z + 0.5) * s - p.z;
          const double d2 = dx * dx + dy * dy + dz * dz;
          if (d2 > cutoff * cutoff) continue;
          double& cell = grid.at(ch, x, y, z);
          cell = std::max(cell, std::exp(-d2 * inv_two_r2));
        }
      }
    }
  }
  return grid;
}

Molecule center_in_grid(const Molecule& mol, const GridSpec& spec) {
  Molecule out = mol;
  if (out.empty()) return out;
  const Vec3 c = mol.centroid();
  const double mid = spec.grid_center();
  for (auto& a : out.atoms) a.position = a.position - c + Vec3{mid, mid, mid};
  return out;
}

// --- find_peaks -----------------------------------------------------------

namespace {

// Least-squares fit of a full 3D quadratic to log-density values on the 3^3
// stencil around a peak voxel, followed by damped Newton steps toward the
// fitted maximum. Returns the offset from the voxel center in voxel units.
struct QuadraticFit {
  double g[3];      // gradient at the stencil center
  double h[3][3];   // hessian
  bool ok = false;
};

bool solve10(double a[10][10], double b[10], double out[10]) {
  for (int col = 0; col < 10; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 10; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12) return false;
    if (pivot != col) {
      for (int c2 = 0; c2 < 10; ++c2) std::swap(a[pivot][c2], a[col][c2]);
      std::swap(b[pivot], b[col]);
    }
    for (int r = col + 1; r < 10; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c2 = col; c2 < 10; ++c2) a[r][c2] -= f * a[col][c2];
      b[r] -= f * b[col];
    }
  }
  for (int r = 9; r >= 0; --r) {
    double acc = b[r];
    for (int c2 = r + 1; c2 < 10; ++c2) acc -= a[r][c2] * out[c2];
    out[r] = acc / a[r][r];
  }
  return true;
}

QuadraticFit fit_log_quadratic(const VoxelGrid& grid, int ch, int px, int py,
                               int pz) {
  QuadraticFit fit{};
  const int l = grid.spec.edge_length;
  // Basis: 1, dx, dy, dz, dx^2, dy^2, dz^2, dxdy, dxdz, dydz.
  double ata[10][10] = {};
  double atb[10] = {};
  int used = 0;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dz = -1; dz <= 1; ++dz) {
        const int x = px + dx, y = py + dy, z = pz + dz;
        if (x < 0 || y < 0 || z < 0 || x >= l || y >= l || z >= l) continue;
        const double v = grid.at(ch, x, y, z);
        if (v <= 0.0) continue;  // truncated region; log undefined
        const double t = std::log(v);
        const double row[10] = {1.0,
                                static_cast<double>(dx),
                                static_cast<double>(dy),
                                static_cast<double>(dz),
                                static_cast<double>(dx * dx),
                                static_cast<double>(dy * dy),
                                static_cast<double>(dz * dz),
                                static_cast<double>(dx * dy),
                                static_cast<double>(dx * dz),
                                static_cast<double>(dy * dz)};
        for (int i = 0; i < 10; ++i) {
          atb[i] += row[i] * t;
          for (int j = 0; j < 10; ++j) ata[i][j] += row[i] * row[j];
        }
        ++used;
      }
    }
  }
  if (used < 10) return fit;
  double beta[10];
  if (!solve10(ata, atb, beta)) return fit;
  fit.g[0] = beta[1];
  fit.g[1] = beta[2];
  fit.g[2] = beta[3];
  fit.h[0][0] = 2.0 * beta[4];
  fit.h[1][1] = 2.0 * beta[5];
  fit.h[2][2] = 2.0 * beta[6];
  fit.h[0][1] = fit.h[1][0] = beta[7];
  fit.h[0][2] = fit.h[2][0] = beta[8];
  fit.h[1][2] = fit.h[2][1] = beta[9];
  fit.ok = true;
  return fit;
}

bool solve3(const double m[3][3], const double rhs[3], double out[3]) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-12) return false;
  const double inv = 1.0 / det;
  out[0] = inv * (rhs[0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                  m[0][1] * (rhs[1] * m[2][2] - m[1][2] * rhs[2]) +
                  m[0][2] * (rhs[1] * m[2][1] - m[1][1] * rhs[2]));
  out[1] = inv * (m[0][0] * (rhs[1] * m[2][2] - m[1][2] * rhs[2]) -
                  rhs[0] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                  m[0][2] * (m[1][0] * rhs[2] - rhs[1] * m[2][0]));
  out[2] = inv * (m[0][0] * (m[1][1] * rhs[2] - rhs[1] * m[2][1]) -
                  m[0][1] * (m[1][0] * rhs[2] - rhs[1] * m[2][0]) +
                  rhs[0] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]));
  return true;
}

Vec3 refine_peak(const VoxelGrid& grid, int ch, int px, int py, int pz,
                 int max_iters) {
  const double s = grid.spec.spacing;
  const Vec3 center{(px + 0.5) * s, (py + 0.5) * s, (pz + 0.5) * s};
  const auto fit = fit_log_quadratic(grid, ch, px, py, pz);
  if (!fit.ok) return center;
  // Maxima only: hessian diagonal must curve downward.
  if (fit.h[0][0] >= 0 || fit.h[1][1] >= 0 || fit.h[2][2] >= 0) return center;

  double t[3] = {0.0, 0.0, 0.0};  // offset in voxel units
  for (int iter = 0; iter < max_iters; ++iter) {
    // Newton step on the fitted quadratic: solve H d = -(g + H t).
    double rhs[3];
    for (int i = 0; i < 3; ++i) {
      rhs[i] = -(fit.g[i] + fit.h[i][0] * t[0] + fit.h[i][1] * t[1] +
                 fit.h[i][2] * t[2]);
    }
    double d[3];
    if (!solve3(fit.h, rhs, d)) break;
    double step = std::max({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])});
    const double damp = step > 0.75 ? 0.75 / step : 1.0;
    for (int i = 0; i < 3; ++i) t[i] += damp * d[i];
    if (step < 1e-12) break;
  }
  for (int i = 0; i < 3; ++i) t[i] = std::clamp(t[i], -1.0, 1.0);
  return {center.x + t[0] * s, center.y + t[1] * s, center.z + t[2] * s};
}

}  // namespace

Molecule find_peaks(const VoxelGrid& grid, double threshold,
                    int max_refine_iters) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("peak threshold must lie in (0,1)");
  const int l = grid.spec.edge_length;
  Molecule out;
  for (int ch = 0; ch < grid.spec.num_channels(); ++ch) {
    struct Peak {
      Vec3 pos;
      double value;
    };
    std::vector<Peak> peaks;
    for (int x = 0; x < l; ++x) {
      for (int y = 0; y < l; ++y) {
        for (int z = 0; z < l; ++z) {
          const double v = grid.at(ch, x, y, z);
          if (v < threshold) continue;
          // Non-strict maximum: an atom halfway between voxel centers makes a
          // plateau of equal values, and a strict test would drop it. Plateau
          // members refine toward the same maximum and merge below.
          bool is_max = true;
          for (int dx = -1; dx <= 1 && is_max; ++dx) {
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
              for (int dz = -1; dz <= 1 && is_max; ++dz) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int nx = x + dx, ny = y + dy, nz = z + dz;
                if (nx < 0 || ny < 0 || nz < 0 || nx >= l || ny >= l || nz >= l)
                  continue;
                if (grid.at(ch, nx, ny, nz) > v) is_max = false;
              }
            }
          }
          if (!is_max) continue;
          peaks.push_back({refine_peak(grid, ch, x, y, z, max_refine_iters), v});
        }
      }
    }
    // Merge same-channel peaks closer than half a voxel, keeping the denser.
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
      return a.value > b.value;
    });
    std::vector<Peak> kept;
    const double merge_dist = 0.5 * grid.spec.spacing;
    for (const auto& p : peaks) {
      bool merged = false;
      for (const auto& k : kept) {
        if (distance(p.pos, k.pos) < merge_dist) {
          merged = true;
          break;
        }
      }
      if (!merged) kept.push_back(p);
    }
    for (const auto& p : kept)
      out.atoms.push_back({grid.spec.channels[ch], p.pos});
  }
  return out;
}

// --- rigid transforms ---------------------------------------------------------

Mat3 quaternion_rotation_matrix(const std::array<double, 4>& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Mat3 random_rotation(Rng& rng) {
  std::array<double, 4> q;
  double norm2 = 0.0;
  do {
    for (auto& qi : q) qi = rng.normal();
    norm2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
  } while (norm2 < 1e-12);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& qi : q) qi *= inv;
  return quaternion_rotation_matrix(q);
}

Molecule apply_rigid_transform(const Molecule& mol, const Mat3& rotation,
                               const Vec3& translation) {
  Molecule out = mol;
  const Vec3 c = mol.centroid();
  for (auto& a : out.atoms) {
    const Vec3 p = a.position - c;
    a.position = {
        rotation[0][0] * p.x + rotation[0][1] * p.y + rotation[0][2] * p.z,
        rotation[1][0] * p.x + rotation[1][1] * p.y + rotation[1][2] * p.z,
        rotation[2][0] * p.x + rotation[2][1] * p.y + rotation[2][2] * p.z};
    a.position += c + translation;
  }
  return out;
}

Molecule random_rigid_transform(const Molecule& mol, Rng& rng,
                                double max_translation) {
  const Mat3 rot = random_rotation(rng);
  const Vec3 t{rng.uniform(-max_translation, max_translation),
               rng.uniform(-max_translation, max_translation),
               rng.uniform(-max_translation, max_translation)};
  return apply_rigid_transform(mol, rot, t);
}

// --- serialization ----------------------------------------------------------

void save_grid(const VoxelGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write grid file: " + path);
  const char magic[4] = {'V', 'X', 'G', '1'};
  const uint32_t c = static_cast<uint32_t>(grid.spec.num_channels());
  const uint32_t l = static_cast<uint32_t>(grid.spec.edge_length);
  const uint32_t spacing_micro =
      static_cast<uint32_t>(std::llround(grid.spec.spacing * 1e6));
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(&l), 4);
  out.write(reinterpret_cast<const char*>(&spacing_micro), 4);
  std::vector<float> buf(grid.data.size());
  for (size_t i = 0; i < grid.data.size(); ++i)
    buf[i] = static_cast<float>(grid.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

VoxelGrid load_grid(const std::string& path, double atom_radius) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open grid file: " + path);
  char magic[4];
  uint32_t c = 0, l = 0, spacing_micro = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&c), 4);
  in.read(reinterpret_cast<char*>(&l), 4);
  in.read(reinterpret_cast<char*>(&spacing_micro), 4);
  if (!in || std::memcmp(magic, "VXG1", 4) != 0)
    throw std::runtime_error("bad grid file header: " + path);
  if (c == 0 || c > kNumElements)
    throw std::runtime_error("grid file channel count out of range");
  GridSpec spec;
  spec.edge_length = static_cast<int>(l);
  spec.spacing = spacing_micro * 1e-6;
  spec.atom_radius = atom_radius;
  spec.channels.assign(kAllElements.begin(), kAllElements.begin() + c);
  VoxelGrid grid(spec);
  std::vector<float> buf(grid.data.size());
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw std::runtime_error("grid file truncated: " + path);
  for (size_t i = 0; i < buf.size(); ++i) grid.data[i] = buf[i];
  return grid;
}

}  // namespace molgen
