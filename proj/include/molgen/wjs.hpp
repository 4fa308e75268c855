#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "molgen/latentdae.hpp"
#include "molgen/molgraph.hpp"
#include "molgen/rng.hpp"
#include "molgen/tensor.hpp"
#include "molgen/vqvae.hpp"

namespace molgen {

struct SamplerParams {
  double gamma = 1.0;  // friction
  double u = 1.0;      // inverse mass
  double delta = 0.25; // step size
  double sigma = 1.8;  // must equal the denoiser's training sigma

  void validate() const;
};

using ScoreFn = std::function<Tensor(const Tensor&)>;

struct SamplerState {
  Tensor y;  // noisy latent position
  Tensor v;  // velocity
  int64_t step = 0;
  Rng rng;
};

// y0 = seed + N(0, sigma^2 I), v0 = 0.
SamplerState init_chain(const Tensor& seed_latent, const SamplerParams& params,
                        Rng rng);

// k steps of the splitting integrator for
//   dy = v dt,  dv = -gamma v dt + u g(y) dt + sqrt(2 gamma u) dB
// in the order half-kick, half-drift, exact velocity refresh, half-drift,
// half-kick. Throws (with the step index) if the state turns non-finite.
void walk(SamplerState& state, int64_t k, const SamplerParams& params,
          const ScoreFn& score_fn);

// One denoiser pass on the current position; does not mutate the chain.
Tensor jump(const SamplerState& state, const DenoiseFn& denoise);

// --------------------------------------------------------------------------
// seeded library generation
// --------------------------------------------------------------------------

struct LibrarySample {
  int chain = 0;
  int64_t k = 0;
  uint64_t rng_seed = 0;
  bool empty_molecule = false;
  BondedMolecule molecule;
  int hydrogens_added = 0;
  double seconds = 0.0;
};

struct GenerationModels {
  VqVae* vqvae = nullptr;
  const DenoiserBundle* denoiser = nullptr;
  bool use_ema = false;  // sample with the EMA weights instead of live ones
};

struct GenerateOptions {
  double peak_threshold = 0.3;
  bool record_timings = true;  // when false every `seconds` field is 0.0
};

// For each chain: encode the seed once, walk incrementally through the sorted
// k checkpoints, and at each one jump -> unnormalize -> decode -> find_peaks
// -> infer_bonds -> add_hydrogens -> largest_fragment. A decode with no peaks
// is emitted with empty_molecule = true rather than raised.
std::vector<LibrarySample> generate_library(
    const Molecule& seed, const std::vector<int64_t>& steps, int chains,
    const GenerationModels& models, const SamplerParams& params,
    uint64_t master_seed, const GenerateOptions& options = {});

// Graph recovery used on every decoded grid (also handy standalone).
struct RecoveredMolecule {
  BondedMolecule molecule;
  bool empty = false;
  int hydrogens_added = 0;
};
RecoveredMolecule recover_molecule(const VoxelGrid& grid,
                                   double peak_threshold);

}  // namespace molgen
