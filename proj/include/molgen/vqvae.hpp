#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "molgen/layers.hpp"
#include "molgen/optim.hpp"
#include "molgen/tensor.hpp"
#include "molgen/voxel.hpp"

namespace molgen {

// Finite set of latent code vectors plus usage accounting.
class Codebook {
 public:
  Codebook(int64_t num_codes, int64_t dim, Rng& rng);

  int64_t size() const { return embeddings.dim(0); }
  int64_t dim() const { return embeddings.dim(1); }

  // Re-seeds the code vectors from sampled encoder-output columns (one column
  // per code, drawn with replacement, plus a small jitter to keep them
  // distinct). Greatly reduces dead codes on small datasets.
  void init_from_samples(const std::vector<std::vector<double>>& columns,
                         Rng& rng);

  void reset_usage() { std::fill(usage.begin(), usage.end(), 0); }
  int64_t codes_used() const;

  Tensor embeddings;  // [K, d]
  Tensor gembeddings;
  std::vector<uint64_t> usage;  // incremented by quantize()
};

// Quantization output: per-position nearest code and the assembled vectors.
struct LatentCode {
  Tensor z_q;                    // [d, m, m, m]
  std::vector<int32_t> indices;  // m^3, position-major (same order as z_q
                                 // spatial layout)
};

// Nearest code per spatial position (ties -> lowest index); increments the
// codebook usage counters.
LatentCode quantize(const Tensor& z_e, Codebook& codebook);

// Grid <-> tensor views ([channels, l, l, l], identical memory order).
Tensor grid_tensor(const VoxelGrid& grid);
VoxelGrid tensor_grid(const Tensor& t, const GridSpec& spec);

struct VqLoss {
  double reconstruction = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  double beta = 0.25;
  double total = 0.0;
};

struct VqVaeConfig {
  GridSpec grid;
  int64_t embedding_dim = 256;  // d
  int64_t num_codes = 256;      // K
  int64_t base_channels = 24;
  int64_t attn_heads = 4;
  double dropout = 0.0;
  double commitment_beta = 0.25;
  uint64_t init_seed = 1;

  int64_t latent_edge() const { return grid.edge_length / 4; }  // two levels
};

// Encoder -> codebook -> decoder. The decoder consumes only the quantized
// latent; there are no encoder->decoder skip connections by construction.
class VqVae {
 public:
  explicit VqVae(const VqVaeConfig& cfg);

  const VqVaeConfig& config() const { return cfg_; }

  // Inference-mode passes on raw tensors ([channels, l, l, l] grids and
  // [d, m, m, m] latents).
  Tensor encode_tensor(const Tensor& x) const;
  Tensor decode_tensor(const Tensor& z_q) const;

  Tensor encode(const VoxelGrid& grid) const;
  VoxelGrid decode(const Tensor& z_q) const;

  std::vector<ParamRef> params();
  void zero_grad();

  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // Training internals (exposed for the train step).
  Sequential& encoder() { return encoder_; }
  Sequential& decoder() { return decoder_; }

  void save(const std::string& path, const EmaShadow* ema,
            const std::string& extra_meta_json) const;
  void load(const std::string& path, EmaShadow* ema);

 private:
  VqVaeConfig cfg_;
  // mutable: forward passes are logically const but reuse the layer API
  mutable Sequential encoder_;
  mutable Sequential decoder_;
  Codebook codebook_;

  static Codebook make_codebook(const VqVaeConfig& cfg);
  Tensor grid_to_tensor(const VoxelGrid& grid) const;
  void check_grid_shape(const Tensor& x) const;
  void check_latent_shape(const Tensor& z) const;
};

// One optimizer step on the three-term objective
//   mean((xhat-x)^2) + mean((sg[z_e]-e)^2) + beta * mean((z_e-sg[e])^2)
// with straight-through reconstruction gradients into the encoder. Aborts
// (throws) without stepping when any term is non-finite, naming the term.
VqLoss vq_train_step(const std::vector<VoxelGrid>& batch, VqVae& model,
                     AdamW& opt, EmaShadow* ema);

// Loss terms only (no gradients, no optimizer); used for evaluation.
VqLoss vq_eval_loss(const VoxelGrid& grid, VqVae& model);

// Mean per-channel intersection-over-union between two grids after
// thresholding (channels absent from both count as perfect overlap).
double grid_iou(const VoxelGrid& a, const VoxelGrid& b, double threshold);

}  // namespace molgen
