#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "molgen/latentdae.hpp"
#include "molgen/metrics.hpp"
#include "molgen/molecule.hpp"
#include "molgen/voxel.hpp"
#include "molgen/vqvae.hpp"
#include "molgen/wjs.hpp"

namespace molgen {

// Flat key=value configuration ('#' starts a comment, blank lines ignored).
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  std::string get_string(const std::string& key, const std::string& def) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  uint64_t seed() const;
  std::string hash() const;  // stable digest of all entries

  GridSpec grid() const;
  VqVaeConfig vqvae_config() const;
  DenoiserConfig denoiser_config() const;
  SamplerParams sampler_params() const;
  AdamWConfig optimizer_config(const std::string& stage) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// --------------------------------------------------------------------------
// toy dataset
// --------------------------------------------------------------------------

struct ToyDatasetSpec {
  int count = 100;
  int min_heavy = 3;
  int max_heavy = 12;
  uint64_t seed = 7;
  double min_distance = 1.0;  // global all-pairs floor, hydrogens included
  double max_radius = 3.2;    // max distance from centroid (compactness)
};

// Random tree-grown molecules with table bond lengths; every emitted molecule
// re-derives its own bond graph from geometry, passes validity() after
// hydrogen completion, and respects the distance/compactness bounds.
std::vector<Molecule> generate_toy_dataset(const ToyDatasetSpec& spec);

void save_dataset(const std::vector<Molecule>& mols, const std::string& dir);
std::vector<Molecule> load_dataset(const std::string& dir);

// --------------------------------------------------------------------------
// orchestration
// --------------------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  std::string loss_csv_path;
  std::vector<double> epoch_total_loss;
  double final_metric = 0.0;  // vqvae: mean IoU on a probe subset; dae: loss
};

// stage is "vqvae" or "dae"; the dae stage requires the vqvae checkpoint.
TrainResult run_training(const std::string& stage, const Config& cfg);

struct GenerateRunResult {
  std::string library_dir;
  std::string manifest_path;
  int samples = 0;
};

GenerateRunResult run_generate(const Config& cfg, const std::string& seed_file,
                               const std::vector<int64_t>& steps, int chains);

// Evaluates a generated library directory against the seed molecule and the
// reference dataset; writes metrics.json / metrics.txt into the directory.
MetricsReport run_evaluate(const Config& cfg, const std::string& library_dir,
                           const std::string& seed_file,
                           const std::string& data_dir, int repeats);

struct BenchmarkReport {
  // element-count arithmetic for the paper-shape preset
  int64_t latent_elements = 0;
  int64_t voxel_elements = 0;
  int64_t ratio = 0;
  // measured per-step walk cost on the desk preset (absent when steps == 0)
  std::optional<double> latent_step_seconds;
  std::optional<double> voxel_step_seconds;
  std::optional<double> speedup;

  std::string to_json() const;
};

BenchmarkReport run_benchmark(const Config& cfg, int measure_steps);

}  // namespace molgen
