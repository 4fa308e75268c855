#include "molgen/wjs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "molgen/voxel.hpp"

namespace molgen {

void SamplerParams::validate() const {
  if (!(gamma > 0.0) || !(u > 0.0) || !(delta > 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("sampler: gamma, u, delta, sigma must be > 0");
}

SamplerState init_chain(const Tensor& seed_latent, const SamplerParams& params,
                        Rng rng) {
  params.validate();
  seed_latent.require_finite("init_chain seed latent");
  SamplerState s;
  s.rng = rng;
  s.y = Tensor(seed_latent.shape);
  const size_t n = seed_latent.data.size();
  for (size_t i = 0; i < n; ++i)
    s.y.data[i] = seed_latent.data[i] + params.sigma * s.rng.normal();
  s.v = Tensor::zeros(seed_latent.shape);
  return s;
}

void walk(SamplerState& state, int64_t k, const SamplerParams& params,
          const ScoreFn& score_fn) {
  params.validate();
  if (k < 0) throw std::invalid_argument("walk: negative step count");
  if (k == 0) return;
  const double h2 = 0.5 * params.delta;
  const double uh2 = params.u * h2;
  const double c1 = std::exp(-params.gamma * params.delta);
  const double c2 =
      std::sqrt(params.u * (1.0 - std::exp(-2.0 * params.gamma * params.delta)));
  const size_t n = state.y.data.size();

  Tensor g = score_fn(state.y);
  if (!g.same_shape(state.y))
    throw std::invalid_argument("walk: score shape mismatch");
  for (int64_t it = 0; it < k; ++it) {
    double* y = state.y.data.data();
    double* v = state.v.data.data();
    for (size_t i = 0; i < n; ++i) v[i] += uh2 * g.data[i];
    for (size_t i = 0; i < n; ++i) y[i] += h2 * v[i];
    for (size_t i = 0; i < n; ++i)
      v[i] = c1 * v[i] + c2 * state.rng.normal();
    for (size_t i = 0; i < n; ++i) y[i] += h2 * v[i];
    g = score_fn(state.y);
    for (size_t i = 0; i < n; ++i) v[i] += uh2 * g.data[i];
    ++state.step;
    if (!state.y.all_finite() || !state.v.all_finite())
      throw std::runtime_error("walk: non-finite state at step " +
                               std::to_string(state.step));
  }
}

Tensor jump(const SamplerState& state, const DenoiseFn& denoise) {
  Tensor z = denoise(state.y);
  if (!z.same_shape(state.y))
    throw std::invalid_argument("jump: denoiser changed the shape");
  z.require_finite("jump");
  return z;
}

// --------------------------------------------------------------------------
// library generation
// --------------------------------------------------------------------------

RecoveredMolecule recover_molecule(const VoxelGrid& grid,
                                   double peak_threshold) {
  // Physical plausibility gates: a box of this size cannot hold more heavy
  // atoms than hard-sphere packing allows, and no element bonds to more than
  // a handful of neighbours. Decodes that violate either are junk density
  // (e.g. from an undertrained decoder); emit them as failed samples instead
  // of feeding unbounded graphs downstream.
  const double volume = grid.spec.extent() * grid.spec.extent() *
                        grid.spec.extent();
  const size_t max_peaks = static_cast<size_t>(2.0 * volume);  // ~0.5 A^3/atom
  RecoveredMolecule out;
  Molecule peaks = find_peaks(grid, peak_threshold);
  if (peaks.empty() || peaks.size() > max_peaks) {
    out.empty = true;
    return out;
  }
  BondedMolecule bonded = infer_bonds(peaks);
  std::vector<int> degree(bonded.molecule.size(), 0);
  for (const Bond& b : bonded.bonds) {
    ++degree[static_cast<size_t>(b.i)];
    ++degree[static_cast<size_t>(b.j)];
  }
  for (int d : degree) {
    if (d > 8) {
      out.empty = true;
      return out;
    }
  }
  AddHydrogensResult withh = add_hydrogens(bonded);
  out.hydrogens_added = withh.hydrogens_added;
  out.molecule = largest_fragment(withh.molecule);
  out.empty = out.molecule.molecule.empty();
  return out;
}

namespace {

uint64_t mix_seed(uint64_t master, uint64_t stream) {
  uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<LibrarySample> generate_library(
    const Molecule& seed, const std::vector<int64_t>& steps, int chains,
    const GenerationModels& models, const SamplerParams& params,
    uint64_t master_seed, const GenerateOptions& options) {
  params.validate();
  if (!models.vqvae || !models.denoiser)
    throw std::invalid_argument("generate_library: missing models");
  if (chains <= 0) throw std::invalid_argument("generate_library: chains must be > 0");
  if (steps.empty()) throw std::invalid_argument("generate_library: no step counts");
  for (int64_t k : steps)
    if (k < 0) throw std::invalid_argument("generate_library: negative step count");
  const DenoiserBundle& dae = *models.denoiser;
  if (dae.noise.sigma != params.sigma)
    throw std::invalid_argument(
        "generate_library: sampler sigma does not match the denoiser "
        "checkpoint");
  VqVae& vq = *models.vqvae;
  if (dae.config.channels != vq.config().embedding_dim ||
      dae.config.edge != vq.config().latent_edge())
    throw std::invalid_argument(
        "generate_library: denoiser latent shape does not match the vqvae");

  // Optionally sample with the EMA weights on a scratch copy of the net.
  std::unique_ptr<DenoiserUNet> ema_net;
  const DenoiserUNet* net = dae.net.get();
  if (models.use_ema) {
    ema_net = std::make_unique<DenoiserUNet>(dae.config);
    auto prefs = ema_net->params();
    dae.ema.apply_to(prefs);
    net = ema_net.get();
  }
  const DenoiseFn denoise_fn = [net](const Tensor& y) { return net->denoise(y); };
  const ScoreFn score_fn = [&](const Tensor& y) {
    return score(y, denoise_fn, dae.noise);
  };

  // Seed latent: center -> voxelize -> encode -> quantize -> normalize.
  Molecule centered = center_in_grid(seed, vq.config().grid);
  VoxelGrid grid = voxelize(centered, vq.config().grid);
  Tensor z_e = vq.encode(grid);
  LatentCode code = quantize(z_e, vq.codebook());
  Tensor seed_latent = dae.normalizer.normalize(code.z_q);

  std::vector<int64_t> ks = steps;
  std::sort(ks.begin(), ks.end());

  std::vector<LibrarySample> out;
  out.reserve(static_cast<size_t>(chains) * ks.size());
  using clock = std::chrono::steady_clock;
  for (int chain = 0; chain < chains; ++chain) {
    const uint64_t chain_seed = mix_seed(master_seed, static_cast<uint64_t>(chain));
    SamplerState state = init_chain(seed_latent, params, Rng(chain_seed));
    int64_t walked = 0;
    for (int64_t k : ks) {
      const auto t0 = clock::now();
      walk(state, k - walked, params, score_fn);
      walked = k;
      Tensor clean = jump(state, denoise_fn);
      Tensor latent = dae.normalizer.unnormalize(clean);
      VoxelGrid decoded = vq.decode(latent);
      RecoveredMolecule rec = recover_molecule(decoded, options.peak_threshold);
      const auto t1 = clock::now();
      LibrarySample sample;
      sample.chain = chain;
      sample.k = k;
      sample.rng_seed = chain_seed;
      sample.empty_molecule = rec.empty;
      sample.molecule = rec.molecule;
      sample.hydrogens_added = rec.hydrogens_added;
      sample.seconds =
          options.record_timings
              ? std::chrono::duration<double>(t1 - t0).count()
              : 0.0;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace molgen
