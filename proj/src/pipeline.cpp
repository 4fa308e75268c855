#include "molgen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "molgen/molgraph.hpp"

namespace molgen {

namespace fs = std::filesystem;

// --------------------------------------------------------------------------
// Config
// --------------------------------------------------------------------------

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' on line " +
                               std::to_string(lineno));
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: empty key on line " +
                               std::to_string(lineno));
    cfg.kv_[key] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::string Config::get_string(const std::string& key,
                               const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  size_t pos = 0;
  int64_t v = 0;
  bool ok = true;
  try {
    v = std::stoll(it->second, &pos);
  } catch (const std::exception&) {
    ok = false;
  }
  if (!ok || pos != it->second.size())
    throw std::runtime_error("config: bad integer for " + key);
  return v;
}

double Config::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  size_t pos = 0;
  double v = 0.0;
  bool ok = true;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    ok = false;
  }
  if (!ok || pos != it->second.size())
    throw std::runtime_error("config: bad number for " + key);
  return v;
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config: bad boolean for " + key);
}

uint64_t Config::seed() const {
  return static_cast<uint64_t>(get_int("seed", 1234));
}

std::string Config::hash() const {
  std::string blob;
  for (const auto& [k, v] : kv_) blob += k + "=" + v + "\n";
  const uint64_t h = fnv1a64(blob.data(), blob.size());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GridSpec Config::grid() const {
  GridSpec spec;
  spec.edge_length = static_cast<int>(get_int("grid.edge", 32));
  spec.spacing = get_double("grid.spacing", 0.25);
  spec.atom_radius = get_double("grid.atom_radius", 0.25);
  spec.validate();
  return spec;
}

VqVaeConfig Config::vqvae_config() const {
  VqVaeConfig c;
  c.grid = grid();
  c.embedding_dim = get_int("vq.embedding_dim", 256);
  c.num_codes = get_int("vq.codes", 256);
  c.base_channels = get_int("vq.base_channels", 24);
  c.attn_heads = get_int("vq.heads", 4);
  c.dropout = get_double("vq.dropout", 0.0);
  c.commitment_beta = get_double("vq.beta", 0.25);
  c.init_seed = seed() ^ 0x76715641ULL;  // stage-distinct init stream
  return c;
}

DenoiserConfig Config::denoiser_config() const {
  DenoiserConfig c;
  c.channels = get_int("vq.embedding_dim", 256);
  c.edge = get_int("grid.edge", 32) / 4;
  c.width = get_int("dae.width", 32);
  c.attn_heads = get_int("dae.heads", 4);
  c.dropout = get_double("dae.dropout", 0.0);
  c.residual = get_bool("dae.residual", true);
  c.init_seed = seed() ^ 0x64616531ULL;
  return c;
}

SamplerParams Config::sampler_params() const {
  SamplerParams p;
  p.gamma = get_double("sampler.gamma", 1.0);
  p.u = get_double("sampler.u", 1.0);
  p.delta = get_double("sampler.delta", 0.25);
  p.sigma = get_double("sigma", 1.8);
  p.validate();
  return p;
}

AdamWConfig Config::optimizer_config(const std::string& stage) const {
  AdamWConfig c;
  c.lr = get_double("opt.lr." + stage, get_double("opt.lr", 1e-5));
  c.beta1 = get_double("opt.beta1", 0.9);
  c.beta2 = get_double("opt.beta2", 0.999);
  c.eps = get_double("opt.eps", 1e-8);
  c.weight_decay = get_double("opt.weight_decay", 1e-2);
  return c;
}

// --------------------------------------------------------------------------
// toy dataset generation
// --------------------------------------------------------------------------

namespace {

struct ElementWeight {
  Element element;
  double weight;
};

// Heavier on carbon; halogens rare so valence-1 leaves don't stall growth.
constexpr ElementWeight kGrowWeights[] = {
    {Element::C, 0.55}, {Element::N, 0.15}, {Element::O, 0.15},
    {Element::F, 0.05}, {Element::S, 0.04}, {Element::Cl, 0.04},
    {Element::Br, 0.02},
};
constexpr ElementWeight kRootWeights[] = {
    {Element::C, 0.70}, {Element::N, 0.15}, {Element::O, 0.10},
    {Element::S, 0.05},
};

template <size_t N>
Element draw_element(const ElementWeight (&table)[N], Rng& rng) {
  double total = 0.0;
  for (const auto& ew : table) total += ew.weight;
  double t = rng.uniform() * total;
  for (const auto& ew : table) {
    t -= ew.weight;
    if (t <= 0.0) return ew.element;
  }
  return table[N - 1].element;
}

Vec3 random_unit(Rng& rng) {
  // three normals normalized: uniform on the sphere
  while (true) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = v.norm();
    if (n > 1e-6) return v * (1.0 / n);
  }
}

bool same_bond_multiset(const std::vector<Bond>& a, const std::vector<Bond>& b) {
  if (a.size() != b.size()) return false;
  auto key = [](const Bond& x) { return std::tuple(x.i, x.j, x.order); };
  std::vector<std::tuple<int, int, int>> ka, kb;
  for (const Bond& x : a) ka.push_back(key(x));
  for (const Bond& x : b) kb.push_back(key(x));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  return ka == kb;
}

double min_pair_distance(const Molecule& mol) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < mol.atoms.size(); ++i)
    for (size_t j = i + 1; j < mol.atoms.size(); ++j)
      best = std::min(best,
                      distance(mol.atoms[i].position, mol.atoms[j].position));
  return best;
}

double bounding_radius(const Molecule& mol) {
  const Vec3 c = mol.centroid();
  double best = 0.0;
  for (const Atom& a : mol.atoms)
    best = std::max(best, distance(a.position, c));
  return best;
}

// One growth attempt; returns the hydrogen-completed molecule or nullopt.
std::optional<Molecule> grow_molecule(int n_heavy, const ToyDatasetSpec& spec,
                                      Rng& rng) {
  Molecule mol;
  std::vector<Bond> bonds;
  std::vector<int> free_val;
  std::vector<std::vector<Vec3>> bond_dirs;  // unit vectors per atom
  mol.atoms.push_back({draw_element(kRootWeights, rng), Vec3{}});
  free_val.push_back(default_valence(mol.atoms[0].element));
  bond_dirs.emplace_back();

  constexpr double kMaxDot = -0.0872;  // new bonds >= 95 deg apart

  for (int t = 1; t < n_heavy; ++t) {
    std::vector<int> open;
    for (size_t i = 0; i < mol.atoms.size(); ++i)
      if (free_val[i] >= 1) open.push_back(static_cast<int>(i));
    if (open.empty()) return std::nullopt;
    const int parent = open[rng.below(open.size())];
    const Element elem = draw_element(kGrowWeights, rng);
    int order = 1;
    if (free_val[static_cast<size_t>(parent)] >= 2 &&
        default_valence(elem) >= 2 && rng.uniform() < 0.15)
      order = 2;
    const double base =
        covalent_radius(mol.atoms[static_cast<size_t>(parent)].element) +
        covalent_radius(elem) - (order == 2 ? 0.20 : 0.0);
    const double length = base + rng.uniform(-0.03, 0.05);

    // Among the valid placements, keep the one nearest the centroid so the
    // tree folds into a compact blob instead of a sprawling chain.
    const Vec3 cen = mol.centroid();
    bool placed = false;
    Vec3 best_dir, best_pos;
    double best_score = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const Vec3 dir = random_unit(rng);
      bool ok = true;
      for (const Vec3& d : bond_dirs[static_cast<size_t>(parent)])
        if (dir.dot(d) > kMaxDot) ok = false;  // too close to a sibling bond
      if (!ok) continue;
      const Vec3 pos =
          mol.atoms[static_cast<size_t>(parent)].position + dir * length;
      for (size_t i = 0; i < mol.atoms.size() && ok; ++i) {
        if (static_cast<int>(i) == parent) continue;
        // keep non-bonded pairs clear of the bond-inference cutoff
        const double clearance =
            covalent_radius(mol.atoms[i].element) + covalent_radius(elem) +
            kBondTolerance + 0.1;
        if (distance(mol.atoms[i].position, pos) < clearance) ok = false;
      }
      if (!ok) continue;
      const double score = distance(pos, cen);
      if (!placed || score < best_score) {
        best_score = score;
        best_dir = dir;
        best_pos = pos;
      }
      placed = true;
    }
    if (!placed) return std::nullopt;
    const int child = static_cast<int>(mol.atoms.size());
    mol.atoms.push_back({elem, best_pos});
    free_val.push_back(default_valence(elem) - order);
    free_val[static_cast<size_t>(parent)] -= order;
    bonds.push_back({parent, child, order});
    bond_dirs[static_cast<size_t>(parent)].push_back(best_dir);
    bond_dirs.push_back({best_dir * -1.0});
  }

  AddHydrogensResult withh = add_hydrogens(BondedMolecule{mol, bonds});
  if (!withh.over_valence_atoms.empty()) return std::nullopt;
  const Molecule& full = withh.molecule.molecule;
  if (min_pair_distance(full) < spec.min_distance) return std::nullopt;
  if (bounding_radius(full) > spec.max_radius) return std::nullopt;
  // geometry must reproduce the intended graph
  BondedMolecule rederived = infer_bonds(full);
  if (!same_bond_multiset(rederived.bonds, withh.molecule.bonds))
    return std::nullopt;
  if (!validity(withh.molecule)) return std::nullopt;
  return full;
}

}  // namespace

std::vector<Molecule> generate_toy_dataset(const ToyDatasetSpec& spec) {
  if (spec.count < 0) throw std::invalid_argument("dataset: negative count");
  if (spec.min_heavy < 1 || spec.max_heavy < spec.min_heavy)
    throw std::invalid_argument("dataset: bad heavy-atom range");
  Rng rng(spec.seed);
  std::vector<Molecule> out;
  out.reserve(static_cast<size_t>(spec.count));
  while (static_cast<int>(out.size()) < spec.count) {
    const int n_heavy =
        spec.min_heavy +
        static_cast<int>(rng.below(
            static_cast<uint64_t>(spec.max_heavy - spec.min_heavy + 1)));
    for (int attempt = 0; attempt < 4000; ++attempt) {
      auto mol = grow_molecule(n_heavy, spec, rng);
      if (mol) {
        out.push_back(std::move(*mol));
        break;
      }
      if (attempt == 3999)
        throw std::runtime_error("dataset: failed to grow a molecule");
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// dataset I/O
// --------------------------------------------------------------------------

void save_dataset(const std::vector<Molecule>& mols, const std::string& dir) {
  fs::create_directories(dir);
  for (size_t i = 0; i < mols.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "mol_%05zu.xyz", i);
    save_xyz_file(mols[i], (fs::path(dir) / name).string());
  }
}

std::vector<Molecule> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("dataset: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xyz")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  std::vector<Molecule> out;
  out.reserve(files.size());
  for (const std::string& f : files) out.push_back(load_xyz_file(f));
  if (out.empty()) throw std::runtime_error("dataset: no .xyz files in " + dir);
  return out;
}

}  // namespace molgen
