#pragma once

#include <functional>
#include <string>
#include <vector>

#include "molgen/layers.hpp"
#include "molgen/optim.hpp"
#include "molgen/rng.hpp"
#include "molgen/tensor.hpp"

namespace molgen {

// Per-channel affine normalization fitted on training latents.
struct LatentNormalizer {
  Tensor mu;     // [d]
  Tensor sigma;  // [d], clamped to >= 1e-8
  std::vector<int64_t> clamped_channels;

  Tensor normalize(const Tensor& z) const;
  Tensor unnormalize(const Tensor& z) const;
};

// Population (divide-by-N) statistics over every latent and spatial position.
LatentNormalizer fit_normalizer(const std::vector<Tensor>& latents);

struct NoiseModel {
  double sigma = 1.8;
};

// y = z + eps, eps ~ N(0, sigma^2 I).
Tensor corrupt(const Tensor& z, const NoiseModel& noise, Rng& rng);

using DenoiseFn = std::function<Tensor(const Tensor&)>;

// Empirical-Bayes score of the sigma-smoothed density:
//   g(y) = (denoise(y) - y) / sigma^2.
Tensor score(const Tensor& y, const DenoiseFn& denoise,
             const NoiseModel& noise);

struct DenoiserConfig {
  int64_t channels = 256;  // latent channel width d
  int64_t edge = 8;        // latent spatial edge m
  int64_t width = 32;
  int64_t attn_heads = 4;
  double dropout = 0.0;
  bool residual = true;  // predict y + f(y) instead of f(y)
  uint64_t init_seed = 2;
};

// Small U-net over [d, m, m, m] latents: one downsampling level, attention in
// the bottleneck, a channel-concat skip, optional global residual.
class DenoiserUNet final : public Layer {
 public:
  explicit DenoiserUNet(const DenoiserConfig& cfg);

  const char* kind() const override { return "denoiser_unet"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  const DenoiserConfig& config() const { return cfg_; }

  // Eval-mode pass without external cache management.
  Tensor denoise(const Tensor& y) const;

  std::vector<ParamRef> params();

 private:
  DenoiserConfig cfg_;
  Sequential stem_, enc_, down_, mid_, up_, dec_, out_;
  void check_shape(const Tensor& t) const;
};

// One optimizer step of mean MSE between clean latents and the denoised
// corruptions (fresh noise per sample). Returns the batch-mean loss.
double dae_train_step(const std::vector<Tensor>& batch, DenoiserUNet& net,
                      const NoiseModel& noise, AdamW& opt, EmaShadow* ema,
                      Rng& rng);

// Trained denoiser plus everything sampling needs to stay consistent.
struct DenoiserBundle {
  DenoiserConfig config;
  std::unique_ptr<DenoiserUNet> net;
  EmaShadow ema;
  LatentNormalizer normalizer;
  NoiseModel noise;

  void save(const std::string& path, const std::string& extra_meta_json) const;
  static DenoiserBundle load(const std::string& path);
};

}  // namespace molgen
