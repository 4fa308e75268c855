#include "molgen/vqvae.hpp"

#include <cmath>
#include <cstring>
#include <json.hpp>
#include <limits>
#include <stdexcept>

#include "molgen/checkpoint.hpp"

namespace molgen {

namespace {

int64_t pick_groups(int64_t channels) {
  for (int64_t g : {8, 4, 2})
    if (channels % g == 0 && channels >= g) return g;
  return 1;
}

std::unique_ptr<Layer> prenorm_attention(int64_t channels, int64_t heads,
                                         Rng& rng) {
  auto seq = std::make_unique<Sequential>();
  seq->add(std::make_unique<GroupNorm>(channels, pick_groups(channels)));
  seq->add(std::make_unique<Attention>(channels, heads, rng));
  return std::make_unique<Residual>(std::move(seq));
}

nlohmann::ordered_json config_json(const VqVaeConfig& cfg) {
  nlohmann::ordered_json j;
  j["grid_edge"] = cfg.grid.edge_length;
  j["grid_spacing"] = cfg.grid.spacing;
  j["atom_radius"] = cfg.grid.atom_radius;
  j["embedding_dim"] = cfg.embedding_dim;
  j["num_codes"] = cfg.num_codes;
  j["base_channels"] = cfg.base_channels;
  j["attn_heads"] = cfg.attn_heads;
  j["dropout"] = cfg.dropout;
  j["commitment_beta"] = cfg.commitment_beta;
  j["init_seed"] = cfg.init_seed;
  return j;
}

}  // namespace

// --------------------------------------------------------------------------
// Codebook / quantize
// --------------------------------------------------------------------------

Codebook::Codebook(int64_t num_codes, int64_t dim, Rng& rng) {
  if (num_codes < 2) throw std::invalid_argument("codebook: need >= 2 codes");
  if (dim < 1) throw std::invalid_argument("codebook: bad dimension");
  embeddings = Tensor::randn({num_codes, dim}, rng, 0.05);
  gembeddings = Tensor::zeros(embeddings.shape);
  usage.assign(static_cast<size_t>(num_codes), 0);
}

void Codebook::init_from_samples(
    const std::vector<std::vector<double>>& columns, Rng& rng) {
  if (columns.empty())
    throw std::invalid_argument("codebook: no samples to initialize from");
  const int64_t K = size(), d = dim();
  for (int64_t j = 0; j < K; ++j) {
    const auto& col = columns[rng.below(columns.size())];
    if (static_cast<int64_t>(col.size()) != d)
      throw std::invalid_argument("codebook: sample dimension mismatch");
    for (int64_t c = 0; c < d; ++c)
      embeddings.data[j * d + c] = col[static_cast<size_t>(c)] +
                                   1e-3 * rng.normal();
  }
  reset_usage();
}

int64_t Codebook::codes_used() const {
  int64_t n = 0;
  for (uint64_t u : usage)
    if (u > 0) ++n;
  return n;
}

LatentCode quantize(const Tensor& z_e, Codebook& codebook) {
  if (codebook.size() == 0) throw std::invalid_argument("quantize: empty codebook");
  const int64_t d = codebook.dim();
  if (z_e.rank() < 1 || z_e.dim(0) != d)
    throw std::invalid_argument("quantize: channel width does not match codebook");
  const int64_t S = z_e.numel() / d;
  const int64_t K = codebook.size();
  const double* emb = codebook.embeddings.data.data();

  LatentCode out;
  out.z_q = Tensor(z_e.shape);
  out.indices.assign(static_cast<size_t>(S), 0);
  std::vector<double> col(static_cast<size_t>(d));
  for (int64_t p = 0; p < S; ++p) {
    for (int64_t c = 0; c < d; ++c) col[static_cast<size_t>(c)] = z_e.data[c * S + p];
    double best = std::numeric_limits<double>::infinity();
    int64_t best_j = 0;
    for (int64_t j = 0; j < K; ++j) {
      const double* e = emb + j * d;
      double acc = 0.0;
      // Early abandon: terms are non-negative, so once the partial sum
      // reaches the incumbent the full sum cannot beat it, and an exact tie
      // keeps the (lower) incumbent index anyway.
      int64_t c = 0;
      for (; c < d; ++c) {
        const double diff = col[static_cast<size_t>(c)] - e[c];
        acc += diff * diff;
        if (acc >= best) break;
      }
      if (c == d && acc < best) {
        best = acc;
        best_j = j;
      }
    }
    out.indices[static_cast<size_t>(p)] = static_cast<int32_t>(best_j);
    ++codebook.usage[static_cast<size_t>(best_j)];
    for (int64_t c = 0; c < d; ++c) out.z_q.data[c * S + p] = emb[best_j * d + c];
  }
  return out;
}

// --------------------------------------------------------------------------
// grid <-> tensor views
// --------------------------------------------------------------------------

Tensor grid_tensor(const VoxelGrid& grid) {
  const int64_t c = static_cast<int64_t>(grid.spec.num_channels());
  const int64_t l = static_cast<int64_t>(grid.spec.edge_length);
  Tensor t({c, l, l, l});
  std::memcpy(t.data.data(), grid.data.data(),
              grid.data.size() * sizeof(double));
  return t;
}

VoxelGrid tensor_grid(const Tensor& t, const GridSpec& spec) {
  const int64_t c = static_cast<int64_t>(spec.num_channels());
  const int64_t l = static_cast<int64_t>(spec.edge_length);
  if (t.rank() != 4 || t.dim(0) != c || t.dim(1) != l || t.dim(2) != l ||
      t.dim(3) != l)
    throw std::invalid_argument("tensor_grid: shape does not match spec");
  VoxelGrid grid(spec);
  std::memcpy(grid.data.data(), t.data.data(),
              t.data.size() * sizeof(double));
  return grid;
}

// --------------------------------------------------------------------------
// VqVae
// --------------------------------------------------------------------------

Codebook VqVae::make_codebook(const VqVaeConfig& cfg) {
  Rng rng(cfg.init_seed ^ 0x9e3779b97f4a7c15ULL);
  return Codebook(cfg.num_codes, cfg.embedding_dim, rng);
}

VqVae::VqVae(const VqVaeConfig& cfg)
    : cfg_(cfg), codebook_(make_codebook(cfg)) {
  cfg_.grid.validate();
  if (cfg_.grid.edge_length % 4 != 0)
    throw std::invalid_argument("vqvae: grid edge must be divisible by 4");
  Rng rng(cfg_.init_seed);
  const int64_t cin = static_cast<int64_t>(cfg_.grid.num_channels());
  const int64_t c = cfg_.base_channels;
  const int64_t c2 = 2 * c;
  const int64_t ch = (c + 1) / 2;
  const int64_t d = cfg_.embedding_dim;

  encoder_.add(std::make_unique<Conv3d>(cin, c, 4, 2, 1, rng));
  encoder_.add(std::make_unique<GroupNorm>(c, pick_groups(c)));
  encoder_.add(std::make_unique<SiLU>());
  encoder_.add(std::make_unique<Conv3d>(c, c2, 4, 2, 1, rng));
  encoder_.add(std::make_unique<GroupNorm>(c2, pick_groups(c2)));
  encoder_.add(std::make_unique<SiLU>());
  if (cfg_.dropout > 0.0)
    encoder_.add(std::make_unique<Dropout>(cfg_.dropout, rng.next_u64()));
  encoder_.add(prenorm_attention(c2, cfg_.attn_heads, rng));
  encoder_.add(std::make_unique<GroupNorm>(c2, pick_groups(c2)));
  encoder_.add(std::make_unique<SiLU>());
  encoder_.add(std::make_unique<Conv3d>(c2, d, 1, 1, 0, rng));

  decoder_.add(std::make_unique<Conv3d>(d, c2, 1, 1, 0, rng));
  decoder_.add(prenorm_attention(c2, cfg_.attn_heads, rng));
  decoder_.add(std::make_unique<GroupNorm>(c2, pick_groups(c2)));
  decoder_.add(std::make_unique<SiLU>());
  if (cfg_.dropout > 0.0)
    decoder_.add(std::make_unique<Dropout>(cfg_.dropout, rng.next_u64()));
  decoder_.add(std::make_unique<ConvTranspose3d>(c2, c, 4, 2, 1, rng));
  decoder_.add(std::make_unique<GroupNorm>(c, pick_groups(c)));
  decoder_.add(std::make_unique<SiLU>());
  decoder_.add(std::make_unique<ConvTranspose3d>(c, ch, 4, 2, 1, rng));
  decoder_.add(std::make_unique<GroupNorm>(ch, pick_groups(ch)));
  decoder_.add(std::make_unique<SiLU>());
  decoder_.add(std::make_unique<Conv3d>(ch, cin, 3, 1, 1, rng));
  decoder_.add(std::make_unique<Sigmoid>());
}

void VqVae::check_grid_shape(const Tensor& x) const {
  const int64_t l = cfg_.grid.edge_length;
  const int64_t cin = static_cast<int64_t>(cfg_.grid.num_channels());
  if (x.rank() != 4 || x.dim(0) != cin || x.dim(1) != l || x.dim(2) != l ||
      x.dim(3) != l)
    throw std::invalid_argument("encode: grid shape mismatch");
}

void VqVae::check_latent_shape(const Tensor& z) const {
  const int64_t m = cfg_.latent_edge();
  if (z.rank() != 4 || z.dim(0) != cfg_.embedding_dim || z.dim(1) != m ||
      z.dim(2) != m || z.dim(3) != m)
    throw std::invalid_argument("decode: latent shape mismatch");
}

Tensor VqVae::encode_tensor(const Tensor& x) const {
  check_grid_shape(x);
  LayerCache cache;
  return encoder_.forward(x, cache, false);
}

Tensor VqVae::decode_tensor(const Tensor& z_q) const {
  check_latent_shape(z_q);
  LayerCache cache;
  return decoder_.forward(z_q, cache, false);
}

Tensor VqVae::grid_to_tensor(const VoxelGrid& grid) const {
  if (!(grid.spec == cfg_.grid))
    throw std::invalid_argument("encode: grid shape mismatch");
  return grid_tensor(grid);
}

Tensor VqVae::encode(const VoxelGrid& grid) const {
  return encode_tensor(grid_to_tensor(grid));
}

VoxelGrid VqVae::decode(const Tensor& z_q) const {
  return tensor_grid(decode_tensor(z_q), cfg_.grid);
}

std::vector<ParamRef> VqVae::params() {
  std::vector<ParamRef> out;
  encoder_.collect("encoder", out);
  decoder_.collect("decoder", out);
  out.push_back({"codebook.embeddings", &codebook_.embeddings,
                 &codebook_.gembeddings});
  return out;
}

void VqVae::zero_grad() {
  encoder_.zero_grad();
  decoder_.zero_grad();
  codebook_.gembeddings.fill(0.0);
}

void VqVae::save(const std::string& path, const EmaShadow* ema,
                 const std::string& extra_meta_json) const {
  Checkpoint ck;
  nlohmann::ordered_json meta;
  meta["model"] = "vqvae";
  meta["config"] = config_json(cfg_);
  meta["extra"] = extra_meta_json.empty()
                      ? nlohmann::ordered_json::object()
                      : nlohmann::ordered_json::parse(extra_meta_json);
  meta["ema_decay"] = ema ? ema->decay() : 0.0;
  ck.meta_json = meta.dump();
  auto prefs = const_cast<VqVae*>(this)->params();
  store_params(ck, prefs);
  if (ema)
    for (const auto& [name, t] : ema->tensors()) ck.put("ema." + name, t);
  save_checkpoint(ck, path);
}

void VqVae::load(const std::string& path, EmaShadow* ema) {
  Checkpoint ck = load_checkpoint(path);
  const auto meta = nlohmann::json::parse(ck.meta_json);
  if (meta.value("model", "") != std::string("vqvae"))
    throw std::runtime_error("checkpoint: not a vqvae checkpoint: " + path);
  const auto want = config_json(cfg_);
  if (nlohmann::json(meta.at("config")) != nlohmann::json(want))
    throw std::runtime_error("checkpoint: config mismatch in " + path);
  auto prefs = params();
  load_params(ck, prefs);
  if (ema) {
    ema->tensors().clear();
    for (const ParamRef& p : prefs) {
      const Tensor* t = ck.find("ema." + p.name);
      if (!t) throw std::runtime_error("checkpoint: missing EMA tensor for " + p.name);
      ema->tensors()[p.name] = *t;
    }
  }
}

// --------------------------------------------------------------------------
// training step
// --------------------------------------------------------------------------

namespace {

void require_finite_term(double v, const char* term) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("vq_train_step: non-finite ") + term +
                             " term");
}

}  // namespace

VqLoss vq_train_step(const std::vector<VoxelGrid>& batch, VqVae& model,
                     AdamW& opt, EmaShadow* ema) {
  if (batch.empty()) throw std::invalid_argument("vq_train_step: empty batch");
  const double beta = model.config().commitment_beta;
  model.zero_grad();
  VqLoss loss;
  loss.beta = beta;
  for (const VoxelGrid& grid : batch) {
    Tensor x = grid_tensor(grid);
    LayerCache ce;
    Tensor z_e = model.encoder().forward(x, ce, true);
    LatentCode code = quantize(z_e, model.codebook());
    LayerCache cd;
    Tensor xhat = model.decoder().forward(code.z_q, cd, true);

    const double recon = mse(xhat, x);
    const double cb = mse(z_e, code.z_q);
    require_finite_term(recon, "reconstruction");
    require_finite_term(cb, "codebook");
    require_finite_term(beta * cb, "commitment");
    loss.reconstruction += recon;
    loss.codebook += cb;
    loss.commitment += cb;

    Tensor gxhat = mse_grad(xhat, x);
    Tensor gzq = model.decoder().backward(cd, gxhat);
    // straight-through copy plus the commitment pull toward the chosen codes
    Tensor commit_g = mse_grad(z_e, code.z_q);
    axpy(beta, commit_g, gzq);
    model.encoder().backward(ce, gzq);
    // codebook term moves only the selected rows toward z_e
    const int64_t d = model.codebook().dim();
    const int64_t S = z_e.numel() / d;
    double* gemb = model.codebook().gembeddings.data.data();
    for (int64_t p = 0; p < S; ++p) {
      const int64_t j = code.indices[static_cast<size_t>(p)];
      for (int64_t c = 0; c < d; ++c)
        gemb[j * d + c] -= commit_g.data[c * S + p];
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const ParamRef& p : model.params())
    for (double& g : p.grad->data) g *= inv_b;
  loss.reconstruction *= inv_b;
  loss.codebook *= inv_b;
  loss.commitment *= inv_b;
  loss.total = loss.reconstruction + loss.codebook + beta * loss.commitment;

  auto prefs = model.params();
  opt.step(prefs);
  if (ema) {
    if (ema->empty()) ema->init(prefs);
    ema->update(prefs);
  }
  return loss;
}

VqLoss vq_eval_loss(const VoxelGrid& grid, VqVae& model) {
  Tensor x = grid_tensor(grid);
  Tensor z_e = model.encode_tensor(x);
  LatentCode code = quantize(z_e, model.codebook());
  Tensor xhat = model.decode_tensor(code.z_q);
  VqLoss loss;
  loss.beta = model.config().commitment_beta;
  loss.reconstruction = mse(xhat, x);
  loss.codebook = mse(z_e, code.z_q);
  loss.commitment = loss.codebook;
  loss.total = loss.reconstruction + loss.codebook + loss.beta * loss.commitment;
  return loss;
}

double grid_iou(const VoxelGrid& a, const VoxelGrid& b, double threshold) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("grid_iou: spec mismatch");
  const size_t c = a.spec.num_channels();
  const size_t per = a.spec.voxels_per_channel();
  double sum = 0.0;
  for (size_t ch = 0; ch < c; ++ch) {
    int64_t inter = 0, uni = 0;
    const double* pa = a.data.data() + ch * per;
    const double* pb = b.data.data() + ch * per;
    for (size_t i = 0; i < per; ++i) {
      const bool va = pa[i] > threshold;
      const bool vb = pb[i] > threshold;
      inter += (va && vb) ? 1 : 0;
      uni += (va || vb) ? 1 : 0;
    }
    sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return sum / static_cast<double>(c);
}

}  // namespace molgen
