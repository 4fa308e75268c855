#include "molgen/molgraph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

namespace molgen {

BondedMolecule infer_bonds(const Molecule& mol) {
  BondedMolecule bm;
  bm.molecule = mol;
  const int n = static_cast<int>(mol.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = distance(mol.atoms[i].position, mol.atoms[j].position);
      const double sum = covalent_radius(mol.atoms[i].element) +
                         covalent_radius(mol.atoms[j].element);
      if (d > sum + kBondTolerance) continue;
      int order = 1;
      if (d <= sum - kTripleBondMargin)
        order = 3;
      else if (d <= sum - kDoubleBondMargin)
        order = 2;
      bm.bonds.push_back({i, j, order});
    }
  }
  return bm;
}

// --- add_hydrogens ------------------------------------------------------------

namespace {

// Fixed Fibonacci-sphere directions; deterministic candidate set for greedy
// max-min-angle hydrogen placement.
std::vector<Vec3> sphere_directions(int count = 192) {
  std::vector<Vec3> dirs;
  dirs.reserve(count);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  for (int k = 0; k < count; ++k) {
    const double t = (k + 0.5) / count;
    const double z = 1.0 - 2.0 * t;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * M_PI * k / golden;
    dirs.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  return dirs;
}

Vec3 pick_direction(const std::vector<Vec3>& existing,
                    const std::vector<Vec3>& candidates) {
  if (existing.empty()) return candidates.front();
  // Maximize the minimum angle == minimize the maximum cosine.
  Vec3 best = candidates.front();
  double best_score = 2.0;
  for (const auto& c : candidates) {
    double max_cos = -2.0;
    for (const auto& e : existing) max_cos = std::max(max_cos, c.dot(e));
    if (max_cos < best_score) {
      best_score = max_cos;
      best = c;
    }
  }
  return best;
}

}  // namespace

AddHydrogensResult add_hydrogens(const BondedMolecule& bm) {
  AddHydrogensResult res;
  res.molecule = bm;
  auto& out = res.molecule;
  const auto valences = bm.valence_counts();
  static const std::vector<Vec3> candidates = sphere_directions();

  const int n_in = static_cast<int>(bm.molecule.size());
  for (int i = 0; i < n_in; ++i) {
    const Atom& atom = bm.molecule.atoms[i];
    if (atom.element == Element::H) continue;
    const int deficit = default_valence(atom.element) - valences[i];
    if (deficit < 0) {
      res.over_valence_atoms.push_back(i);
      continue;
    }
    if (deficit == 0) continue;

    std::vector<Vec3> dirs;
    for (const auto& b : bm.bonds) {
      if (b.i == i)
        dirs.push_back((bm.molecule.atoms[b.j].position - atom.position).normalized());
      else if (b.j == i)
        dirs.push_back((bm.molecule.atoms[b.i].position - atom.position).normalized());
    }
    for (int h = 0; h < deficit; ++h) {
      const Vec3 dir = pick_direction(dirs, candidates);
      dirs.push_back(dir);
      const int h_index = static_cast<int>(out.molecule.size());
      out.molecule.atoms.push_back(
          {Element::H, atom.position + dir * kHydrogenBondLength});
      out.bonds.push_back({i, h_index, 1});
      ++res.hydrogens_added;
    }
  }
  return res;
}

// --- fragments -----------------------------------------------------------------

std::vector<BondedMolecule> connected_components(const BondedMolecule& bm) {
  const int n = static_cast<int>(bm.molecule.size());
  std::vector<std::vector<int>> adj(n);
  for (const auto& b : bm.bonds) {
    adj[b.i].push_back(b.j);
    adj[b.j].push_back(b.i);
  }
  std::vector<int> comp(n, -1);
  int n_comp = 0;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::queue<int> q;
    q.push(s);
    comp[s] = n_comp;
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      for (int u : adj[v]) {
        if (comp[u] < 0) {
          comp[u] = n_comp;
          q.push(u);
        }
      }
    }
    ++n_comp;
  }

  std::vector<BondedMolecule> parts(n_comp);
  std::vector<int> remap(n, -1);
  for (int v = 0; v < n; ++v) {
    remap[v] = static_cast<int>(parts[comp[v]].molecule.size());
    parts[comp[v]].molecule.atoms.push_back(bm.molecule.atoms[v]);
  }
  for (const auto& b : bm.bonds) {
    parts[comp[b.i]].bonds.push_back({remap[b.i], remap[b.j], b.order});
  }
  return parts;
}

BondedMolecule largest_fragment(const BondedMolecule& bm) {
  if (bm.molecule.empty())
    throw std::invalid_argument("largest_fragment: empty molecule");
  auto parts = connected_components(bm);
  int best = 0;
  double best_mass = 0.0;
  for (const auto& a : parts[0].molecule.atoms) best_mass += atomic_mass(a.element);
  for (size_t c = 1; c < parts.size(); ++c) {
    double mass = 0.0;
    for (const auto& a : parts[c].molecule.atoms) mass += atomic_mass(a.element);
    const size_t sz = parts[c].molecule.size();
    const size_t best_sz = parts[best].molecule.size();
    // Components are discovered in order of lowest first atom index, so a
    // strict comparison keeps the earliest on full ties.
    if (sz > best_sz || (sz == best_sz && mass > best_mass)) {
      best = static_cast<int>(c);
      best_mass = mass;
    }
  }
  return parts[best];
}

// --- fingerprints -----------------------------------------------------------

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

int Fingerprint::popcount() const {
  int total = 0;
  for (uint64_t w : words) total += std::popcount(w);
  return total;
}

namespace {

struct PathEnumerator {
  const BondedMolecule& bm;
  std::vector<std::vector<std::pair<int, int>>> adj;  // (neighbor, order)
  std::vector<char> on_path;
  std::vector<int> path_atoms;
  std::vector<int> path_orders;
  Fingerprint fp;

  explicit PathEnumerator(const BondedMolecule& m)
      : bm(m), adj(m.molecule.size()), on_path(m.molecule.size(), 0) {
    for (const auto& b : m.bonds) {
      adj[b.i].push_back({b.j, b.order});
      adj[b.j].push_back({b.i, b.order});
    }
  }

  void emit() {
    std::string fwd, rev;
    const size_t k = path_atoms.size();
    for (size_t t = 0; t < k; ++t) {
      if (t > 0) fwd.push_back(static_cast<char>('0' + path_orders[t - 1]));
      fwd.append(element_symbol(bm.molecule.atoms[path_atoms[t]].element));
    }
    for (size_t t = k; t-- > 0;) {
      rev.append(element_symbol(bm.molecule.atoms[path_atoms[t]].element));
      if (t > 0) rev.push_back(static_cast<char>('0' + path_orders[t - 1]));
    }
    const std::string& canon = (rev < fwd) ? rev : fwd;
    const uint64_t h = fnv1a64(canon.data(), canon.size());
    fp.set(static_cast<int>(h % kFingerprintBits));
  }

  void dfs(int v, int bonds_left) {
    on_path[v] = 1;
    path_atoms.push_back(v);
    emit();
    if (bonds_left > 0) {
      for (const auto& [u, order] : adj[v]) {
        if (on_path[u]) continue;
        path_orders.push_back(order);
        dfs(u, bonds_left - 1);
        path_orders.pop_back();
      }
    }
    path_atoms.pop_back();
    on_path[v] = 0;
  }
};

}  // namespace

Fingerprint fingerprint(const BondedMolecule& bm) {
  PathEnumerator walker(bm);
  const int n = static_cast<int>(bm.molecule.size());
  for (int v = 0; v < n; ++v) walker.dfs(v, 7);
  return walker.fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  int inter = 0, uni = 0;
  for (size_t w = 0; w < a.words.size(); ++w) {
    inter += std::popcount(a.words[w] & b.words[w]);
    uni += std::popcount(a.words[w] | b.words[w]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// --- graph hash -----------------------------------------------------------

uint64_t graph_hash(const BondedMolecule& bm) {
  const int n = static_cast<int>(bm.molecule.size());
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (const auto& b : bm.bonds) {
    adj[b.i].push_back({b.j, b.order});
    adj[b.j].push_back({b.i, b.order});
  }
  std::vector<uint64_t> color(n), next(n);
  for (int v = 0; v < n; ++v) {
    const auto sym = element_symbol(bm.molecule.atoms[v].element);
    color[v] = fnv1a64(sym.data(), sym.size());
  }
  for (int round = 0; round < 3; ++round) {
    for (int v = 0; v < n; ++v) {
      std::vector<uint64_t> neigh;
      neigh.reserve(adj[v].size());
      for (const auto& [u, order] : adj[v])
        neigh.push_back(color[u] * 4 + static_cast<uint64_t>(order));
      std::sort(neigh.begin(), neigh.end());
      uint64_t h = fnv1a64(&color[v], sizeof(color[v]));
      for (uint64_t x : neigh) h = fnv1a64(&x, sizeof(x), h);
      next[v] = h;
    }
    color.swap(next);
  }
  std::sort(color.begin(), color.end());
  uint64_t h = fnv1a64(&n, sizeof(n));
  for (uint64_t c : color) h = fnv1a64(&c, sizeof(c), h);
  return h;
}

}  // namespace molgen
