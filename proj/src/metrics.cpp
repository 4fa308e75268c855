#include "molgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <set>
#include <stdexcept>

namespace molgen {

// --------------------------------------------------------------------------
// per-molecule metrics
// --------------------------------------------------------------------------

double atomic_stability(const BondedMolecule& bm) {
  if (bm.molecule.empty())
    throw std::invalid_argument("atomic_stability: empty molecule");
  const std::vector<int> sums = bm.valence_counts();
  int stable = 0;
  for (size_t i = 0; i < bm.molecule.atoms.size(); ++i)
    if (sums[i] == default_valence(bm.molecule.atoms[i].element)) ++stable;
  return static_cast<double>(stable) /
         static_cast<double>(bm.molecule.atoms.size());
}

bool molecular_stability(const BondedMolecule& bm) {
  return atomic_stability(bm) == 1.0;
}

bool validity(const BondedMolecule& bm) {
  if (bm.molecule.empty()) return false;
  const std::vector<int> sums = bm.valence_counts();
  for (size_t i = 0; i < bm.molecule.atoms.size(); ++i)
    if (sums[i] > max_allowed_valence(bm.molecule.atoms[i].element))
      return false;
  return true;
}

// --------------------------------------------------------------------------
// distribution distances
// --------------------------------------------------------------------------

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("wasserstein1: empty sample list");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const int64_t m = static_cast<int64_t>(a.size());
  const int64_t n = static_cast<int64_t>(b.size());
  if (m == n) {
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(m);
  }
  // Piecewise-constant quantile integration with exact integer breakpoints
  // (positions scaled by m*n).
  double w = 0.0;
  int64_t ia = 0, ib = 0, cur = 0;
  const double inv = 1.0 / static_cast<double>(m * n);
  while (ia < m && ib < n) {
    const int64_t pa = (ia + 1) * n;
    const int64_t pb = (ib + 1) * m;
    const int64_t next = std::min(pa, pb);
    w += static_cast<double>(next - cur) * inv * std::abs(a[ia] - b[ib]);
    if (pa == next) ++ia;
    if (pb == next) ++ib;
    cur = next;
  }
  return w;
}

void CategoricalDist::validate() const {
  if (support.size() != prob.size())
    throw std::invalid_argument("distribution: support/probability size mismatch");
  if (support.empty())
    throw std::invalid_argument("distribution: empty support");
  std::set<std::string> seen(support.begin(), support.end());
  if (seen.size() != support.size())
    throw std::invalid_argument("distribution: duplicate support labels");
  double sum = 0.0;
  for (double p : prob) {
    if (p < 0.0) throw std::invalid_argument("distribution: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("distribution: probabilities do not sum to 1");
}

double total_variation(const CategoricalDist& p, const CategoricalDist& q) {
  p.validate();
  q.validate();
  std::map<std::string, std::pair<double, double>> merged;
  for (size_t i = 0; i < p.support.size(); ++i)
    merged[p.support[i]].first = p.prob[i];
  for (size_t i = 0; i < q.support.size(); ++i)
    merged[q.support[i]].second = q.prob[i];
  double tv = 0.0;
  for (const auto& [label, pq] : merged) tv += std::abs(pq.first - pq.second);
  return 0.5 * tv;
}

// --------------------------------------------------------------------------
// pooled observables
// --------------------------------------------------------------------------

std::vector<double> bond_lengths(const BondedMolecule& bm) {
  std::vector<double> out;
  out.reserve(bm.bonds.size());
  for (const Bond& b : bm.bonds)
    out.push_back(distance(bm.molecule.atoms[static_cast<size_t>(b.i)].position,
                           bm.molecule.atoms[static_cast<size_t>(b.j)].position));
  return out;
}

std::vector<double> bond_angles_deg(const BondedMolecule& bm) {
  const size_t n = bm.molecule.atoms.size();
  std::vector<std::vector<int>> nbrs(n);
  for (const Bond& b : bm.bonds) {
    nbrs[static_cast<size_t>(b.i)].push_back(b.j);
    nbrs[static_cast<size_t>(b.j)].push_back(b.i);
  }
  std::vector<double> out;
  constexpr double kRad2Deg = 180.0 / 3.14159265358979323846;
  for (size_t j = 0; j < n; ++j) {
    const auto& nb = nbrs[j];
    const Vec3 pj = bm.molecule.atoms[j].position;
    for (size_t x = 0; x < nb.size(); ++x) {
      for (size_t y = x + 1; y < nb.size(); ++y) {
        const Vec3 va = bm.molecule.atoms[static_cast<size_t>(nb[x])].position - pj;
        const Vec3 vb = bm.molecule.atoms[static_cast<size_t>(nb[y])].position - pj;
        const double den = va.norm() * vb.norm();
        if (den <= 0.0) continue;
        double c = va.dot(vb) / den;
        c = std::clamp(c, -1.0, 1.0);
        out.push_back(std::acos(c) * kRad2Deg);
      }
    }
  }
  return out;
}

std::vector<double> valence_sums(const BondedMolecule& bm) {
  std::vector<double> out;
  const std::vector<int> sums = bm.valence_counts();
  out.reserve(sums.size());
  for (int s : sums) out.push_back(static_cast<double>(s));
  return out;
}

namespace {

CategoricalDist counts_to_dist(const std::map<std::string, int64_t>& counts) {
  CategoricalDist d;
  int64_t total = 0;
  for (const auto& [label, c] : counts) total += c;
  for (const auto& [label, c] : counts) {
    d.support.push_back(label);
    d.prob.push_back(static_cast<double>(c) / static_cast<double>(total));
  }
  return d;
}

}  // namespace

CategoricalDist element_distribution(const std::vector<BondedMolecule>& mols) {
  std::map<std::string, int64_t> counts;
  for (const BondedMolecule& bm : mols)
    for (const Atom& a : bm.molecule.atoms)
      ++counts[std::string(element_symbol(a.element))];
  if (counts.empty())
    throw std::invalid_argument("element_distribution: no atoms");
  return counts_to_dist(counts);
}

CategoricalDist bond_order_distribution(
    const std::vector<BondedMolecule>& mols) {
  std::map<std::string, int64_t> counts;
  for (const BondedMolecule& bm : mols)
    for (const Bond& b : bm.bonds) ++counts[std::to_string(b.order)];
  if (counts.empty())
    throw std::invalid_argument("bond_order_distribution: no bonds");
  return counts_to_dist(counts);
}

// --------------------------------------------------------------------------
// library aggregation
// --------------------------------------------------------------------------

MetricsReport evaluate_library(const std::vector<BondedMolecule>& generated,
                               const BondedMolecule& seed,
                               const std::vector<BondedMolecule>& reference,
                               const std::vector<double>& timings) {
  if (generated.empty())
    throw std::invalid_argument("evaluate_library: empty generated set");
  MetricsReport r;
  const double n = static_cast<double>(generated.size());

  const Fingerprint seed_fp = fingerprint(seed);
  double tan_sum = 0.0, stable_frac_sum = 0.0;
  int64_t stable_count = 0, valid_count = 0;
  std::set<uint64_t> hashes;
  std::vector<BondedMolecule> gen_nonempty;
  for (const BondedMolecule& bm : generated) {
    hashes.insert(graph_hash(bm));
    if (bm.molecule.empty()) continue;  // counts as unstable/invalid/0-sim
    gen_nonempty.push_back(bm);
    tan_sum += tanimoto(fingerprint(bm), seed_fp);
    const double frac = atomic_stability(bm);
    stable_frac_sum += frac;
    if (frac == 1.0) ++stable_count;
    if (validity(bm)) ++valid_count;
  }
  r.tanimoto_mean_pct = 100.0 * tan_sum / n;
  r.stable_sanitized_pct = 100.0 * static_cast<double>(stable_count) / n;
  r.stable_atom_pct = 100.0 * stable_frac_sum / n;
  r.valid_pct = 100.0 * static_cast<double>(valid_count) / n;
  r.uniqueness_pct = 100.0 * static_cast<double>(hashes.size()) / n;

  std::vector<BondedMolecule> ref_nonempty;
  for (const BondedMolecule& bm : reference)
    if (!bm.molecule.empty()) ref_nonempty.push_back(bm);

  auto pool = [](const std::vector<BondedMolecule>& mols,
                 std::vector<double> (*fn)(const BondedMolecule&)) {
    std::vector<double> out;
    for (const BondedMolecule& bm : mols) {
      std::vector<double> v = fn(bm);
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  };

  const auto val_g = pool(gen_nonempty, valence_sums);
  const auto val_r = pool(ref_nonempty, valence_sums);
  r.valency_w1 = (val_g.empty() || val_r.empty()) ? 0.0 : wasserstein1(val_g, val_r);

  const auto len_g = pool(gen_nonempty, bond_lengths);
  const auto len_r = pool(ref_nonempty, bond_lengths);
  r.bond_len_w1 = (len_g.empty() || len_r.empty()) ? 0.0 : wasserstein1(len_g, len_r);

  const auto ang_g = pool(gen_nonempty, bond_angles_deg);
  const auto ang_r = pool(ref_nonempty, bond_angles_deg);
  r.bond_ang_w1 = (ang_g.empty() || ang_r.empty()) ? 0.0 : wasserstein1(ang_g, ang_r);

  const bool atoms_ok = !val_g.empty() && !val_r.empty();
  r.atoms_tv = atoms_ok ? total_variation(element_distribution(gen_nonempty),
                                          element_distribution(ref_nonempty))
                        : 0.0;
  const bool bonds_ok = !len_g.empty() && !len_r.empty();
  r.bonds_tv = bonds_ok
                   ? total_variation(bond_order_distribution(gen_nonempty),
                                     bond_order_distribution(ref_nonempty))
                   : 0.0;

  if (!timings.empty()) {
    double t = 0.0;
    for (double s : timings) t += s;
    r.avg_seconds_per_molecule = t / static_cast<double>(timings.size());
  }
  return r;
}

// --------------------------------------------------------------------------
// serialization
// --------------------------------------------------------------------------

std::string report_to_json(const MetricsReport& r, int repeats, uint64_t seed) {
  nlohmann::ordered_json j;
  j["tanimoto_mean_pct"] = r.tanimoto_mean_pct;
  j["stable_sanitized_pct"] = r.stable_sanitized_pct;
  j["stable_atom_pct"] = r.stable_atom_pct;
  j["valid_pct"] = r.valid_pct;
  j["valency_w1"] = r.valency_w1;
  j["atoms_tv"] = r.atoms_tv;
  j["bonds_tv"] = r.bonds_tv;
  j["bond_len_w1"] = r.bond_len_w1;
  j["bond_ang_w1"] = r.bond_ang_w1;
  j["uniqueness_pct"] = r.uniqueness_pct;
  j["avg_seconds_per_molecule"] = r.avg_seconds_per_molecule;
  j["repeats"] = repeats;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

std::string report_to_table(const MetricsReport& r, int repeats,
                            uint64_t seed) {
  char buf[128];
  std::string out;
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%-26s %14.6f\n", name, v);
    out += buf;
  };
  row("tanimoto_mean_pct", r.tanimoto_mean_pct);
  row("stable_sanitized_pct", r.stable_sanitized_pct);
  row("stable_atom_pct", r.stable_atom_pct);
  row("valid_pct", r.valid_pct);
  row("valency_w1", r.valency_w1);
  row("atoms_tv", r.atoms_tv);
  row("bonds_tv", r.bonds_tv);
  row("bond_len_w1", r.bond_len_w1);
  row("bond_ang_w1", r.bond_ang_w1);
  row("uniqueness_pct", r.uniqueness_pct);
  row("avg_seconds_per_molecule", r.avg_seconds_per_molecule);
  std::snprintf(buf, sizeof(buf), "%-26s %14d\n", "repeats", repeats);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-26s %14llu\n", "seed",
                static_cast<unsigned long long>(seed));
  out += buf;
  return out;
}

}  // namespace molgen
