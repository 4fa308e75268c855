#include "molgen/latentdae.hpp"

#include <cmath>
#include <json.hpp>
#include <stdexcept>

#include "molgen/checkpoint.hpp"

namespace molgen {

// --------------------------------------------------------------------------
// normalizer
// --------------------------------------------------------------------------

namespace {

void check_channels(const Tensor& z, const Tensor& mu, const char* who) {
  if (z.rank() < 1 || z.dim(0) != mu.dim(0))
    throw std::invalid_argument(std::string(who) + ": channel count mismatch");
}

}  // namespace

Tensor LatentNormalizer::normalize(const Tensor& z) const {
  check_channels(z, mu, "normalize");
  const int64_t d = mu.dim(0);
  const int64_t S = z.numel() / d;
  Tensor out(z.shape);
  for (int64_t c = 0; c < d; ++c) {
    const double m = mu.data[static_cast<size_t>(c)];
    const double inv = 1.0 / sigma.data[static_cast<size_t>(c)];
    for (int64_t p = 0; p < S; ++p)
      out.data[c * S + p] = (z.data[c * S + p] - m) * inv;
  }
  return out;
}

Tensor LatentNormalizer::unnormalize(const Tensor& z) const {
  check_channels(z, mu, "unnormalize");
  const int64_t d = mu.dim(0);
  const int64_t S = z.numel() / d;
  Tensor out(z.shape);
  for (int64_t c = 0; c < d; ++c) {
    const double m = mu.data[static_cast<size_t>(c)];
    const double s = sigma.data[static_cast<size_t>(c)];
    for (int64_t p = 0; p < S; ++p) out.data[c * S + p] = z.data[c * S + p] * s + m;
  }
  return out;
}

LatentNormalizer fit_normalizer(const std::vector<Tensor>& latents) {
  if (latents.empty())
    throw std::invalid_argument("fit_normalizer: empty latent set");
  const int64_t d = latents.front().dim(0);
  for (const Tensor& z : latents)
    if (z.rank() < 1 || z.dim(0) != d)
      throw std::invalid_argument("fit_normalizer: inconsistent channel count");

  LatentNormalizer norm;
  norm.mu = Tensor::zeros({d});
  norm.sigma = Tensor::zeros({d});
  const int64_t per = latents.front().numel() / d;
  const double n = static_cast<double>(per * static_cast<int64_t>(latents.size()));
  for (int64_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (const Tensor& z : latents) {
      const double* p = z.data.data() + c * per;
      for (int64_t i = 0; i < per; ++i) sum += p[i];
    }
    const double mean = sum / n;
    double varsum = 0.0;
    for (const Tensor& z : latents) {
      const double* p = z.data.data() + c * per;
      for (int64_t i = 0; i < per; ++i) {
        const double diff = p[i] - mean;
        varsum += diff * diff;
      }
    }
    double sd = std::sqrt(varsum / n);  // population convention
    norm.mu.data[static_cast<size_t>(c)] = mean;
    if (sd < 1e-8) {
      sd = 1e-8;
      norm.clamped_channels.push_back(c);
    }
    norm.sigma.data[static_cast<size_t>(c)] = sd;
  }
  return norm;
}

// --------------------------------------------------------------------------
// corruption and score
// --------------------------------------------------------------------------

Tensor corrupt(const Tensor& z, const NoiseModel& noise, Rng& rng) {
  if (noise.sigma <= 0.0) throw std::invalid_argument("corrupt: sigma must be > 0");
  z.require_finite("corrupt input");
  Tensor y(z.shape);
  const size_t n = z.data.size();
  for (size_t i = 0; i < n; ++i) y.data[i] = z.data[i] + noise.sigma * rng.normal();
  return y;
}

Tensor score(const Tensor& y, const DenoiseFn& denoise,
             const NoiseModel& noise) {
  if (noise.sigma == 0.0) throw std::invalid_argument("score: sigma must be nonzero");
  y.require_finite("score input");
  Tensor zhat = denoise(y);
  if (!zhat.same_shape(y))
    throw std::invalid_argument("score: denoiser changed the shape");
  const double inv = 1.0 / (noise.sigma * noise.sigma);
  Tensor g(y.shape);
  const size_t n = y.data.size();
  for (size_t i = 0; i < n; ++i) g.data[i] = (zhat.data[i] - y.data[i]) * inv;
  return g;
}

// --------------------------------------------------------------------------
// denoiser U-net
// --------------------------------------------------------------------------

namespace {

int64_t pick_groups(int64_t channels) {
  for (int64_t g : {8, 4, 2})
    if (channels % g == 0 && channels >= g) return g;
  return 1;
}

}  // namespace

DenoiserUNet::DenoiserUNet(const DenoiserConfig& cfg) : cfg_(cfg) {
  if (cfg_.edge % 2 != 0 || cfg_.edge < 4)
    throw std::invalid_argument("denoiser: latent edge must be even and >= 4");
  Rng rng(cfg_.init_seed);
  const int64_t d = cfg_.channels;
  const int64_t w = cfg_.width;
  const int64_t w2 = 2 * w;

  stem_.add(std::make_unique<Conv3d>(d, w, 1, 1, 0, rng));

  enc_.add(std::make_unique<GroupNorm>(w, pick_groups(w)));
  enc_.add(std::make_unique<SiLU>());
  enc_.add(std::make_unique<Conv3d>(w, w, 3, 1, 1, rng));

  down_.add(std::make_unique<Conv3d>(w, w2, 4, 2, 1, rng));

  mid_.add(std::make_unique<GroupNorm>(w2, pick_groups(w2)));
  mid_.add(std::make_unique<SiLU>());
  if (cfg_.dropout > 0.0)
    mid_.add(std::make_unique<Dropout>(cfg_.dropout, rng.next_u64()));
  mid_.add(std::make_unique<Conv3d>(w2, w2, 3, 1, 1, rng));
  {
    auto attn = std::make_unique<Sequential>();
    attn->add(std::make_unique<GroupNorm>(w2, pick_groups(w2)));
    attn->add(std::make_unique<Attention>(w2, cfg_.attn_heads, rng));
    mid_.add(std::make_unique<Residual>(std::move(attn)));
  }
  mid_.add(std::make_unique<GroupNorm>(w2, pick_groups(w2)));
  mid_.add(std::make_unique<SiLU>());
  mid_.add(std::make_unique<Conv3d>(w2, w2, 3, 1, 1, rng));

  up_.add(std::make_unique<ConvTranspose3d>(w2, w, 4, 2, 1, rng));

  dec_.add(std::make_unique<GroupNorm>(w2, pick_groups(w2)));
  dec_.add(std::make_unique<SiLU>());
  if (cfg_.dropout > 0.0)
    dec_.add(std::make_unique<Dropout>(cfg_.dropout, rng.next_u64()));
  dec_.add(std::make_unique<Conv3d>(w2, w, 3, 1, 1, rng));

  out_.add(std::make_unique<GroupNorm>(w, pick_groups(w)));
  out_.add(std::make_unique<SiLU>());
  out_.add(std::make_unique<Conv3d>(w, d, 1, 1, 0, rng));
}

void DenoiserUNet::check_shape(const Tensor& t) const {
  if (t.rank() != 4 || t.dim(0) != cfg_.channels || t.dim(1) != cfg_.edge ||
      t.dim(2) != cfg_.edge || t.dim(3) != cfg_.edge)
    throw std::invalid_argument("denoiser: latent shape mismatch");
}

Tensor DenoiserUNet::forward(const Tensor& in, LayerCache& cache,
                             bool training) {
  check_shape(in);
  cache.children.resize(7);
  Tensor a = stem_.forward(in, cache.children[0], training);
  Tensor b = enc_.forward(a, cache.children[1], training);
  Tensor c = down_.forward(b, cache.children[2], training);
  Tensor m = mid_.forward(c, cache.children[3], training);
  Tensor u = up_.forward(m, cache.children[4], training);
  Tensor cat = concat_channels(u, b);
  Tensor dec = dec_.forward(cat, cache.children[5], training);
  Tensor y = out_.forward(dec, cache.children[6], training);
  if (cfg_.residual) axpy(1.0, in, y);
  y.require_finite("denoiser_unet");
  return y;
}

Tensor DenoiserUNet::backward(const LayerCache& cache, const Tensor& gout) {
  Tensor gdec = out_.backward(cache.children[6], gout);
  Tensor gcat = dec_.backward(cache.children[5], gdec);
  Tensor gu, gb_skip;
  split_channels(gcat, cfg_.width, gu, gb_skip);
  Tensor gm = up_.backward(cache.children[4], gu);
  Tensor gc = mid_.backward(cache.children[3], gm);
  Tensor gb = down_.backward(cache.children[2], gc);
  axpy(1.0, gb_skip, gb);
  Tensor ga = enc_.backward(cache.children[1], gb);
  Tensor gin = stem_.backward(cache.children[0], ga);
  if (cfg_.residual) axpy(1.0, gout, gin);
  return gin;
}

void DenoiserUNet::collect(const std::string& prefix,
                           std::vector<ParamRef>& out) {
  stem_.collect(prefix + ".stem", out);
  enc_.collect(prefix + ".enc", out);
  down_.collect(prefix + ".down", out);
  mid_.collect(prefix + ".mid", out);
  up_.collect(prefix + ".up", out);
  dec_.collect(prefix + ".dec", out);
  out_.collect(prefix + ".out", out);
}

void DenoiserUNet::zero_grad() {
  stem_.zero_grad();
  enc_.zero_grad();
  down_.zero_grad();
  mid_.zero_grad();
  up_.zero_grad();
  dec_.zero_grad();
  out_.zero_grad();
}

Tensor DenoiserUNet::denoise(const Tensor& y) const {
  LayerCache cache;
  return const_cast<DenoiserUNet*>(this)->forward(y, cache, false);
}

std::vector<ParamRef> DenoiserUNet::params() {
  std::vector<ParamRef> out;
  collect("denoiser", out);
  return out;
}

// --------------------------------------------------------------------------
// training step
// --------------------------------------------------------------------------

double dae_train_step(const std::vector<Tensor>& batch, DenoiserUNet& net,
                      const NoiseModel& noise, AdamW& opt, EmaShadow* ema,
                      Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("dae_train_step: empty batch");
  net.zero_grad();
  double loss_sum = 0.0;
  for (const Tensor& z : batch) {
    Tensor y = corrupt(z, noise, rng);
    LayerCache cache;
    Tensor zhat = net.forward(y, cache, true);
    const double loss = mse(zhat, z);
    if (!std::isfinite(loss))
      throw std::runtime_error("dae_train_step: non-finite loss");
    loss_sum += loss;
    Tensor g = mse_grad(zhat, z);
    net.backward(cache, g);
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  auto prefs = net.params();
  for (const ParamRef& p : prefs)
    for (double& g : p.grad->data) g *= inv_b;
  opt.step(prefs);
  if (ema) {
    if (ema->empty()) ema->init(prefs);
    ema->update(prefs);
  }
  return loss_sum * inv_b;
}

// --------------------------------------------------------------------------
// bundle I/O
// --------------------------------------------------------------------------

namespace {

nlohmann::ordered_json denoiser_config_json(const DenoiserConfig& cfg) {
  nlohmann::ordered_json j;
  j["channels"] = cfg.channels;
  j["edge"] = cfg.edge;
  j["width"] = cfg.width;
  j["attn_heads"] = cfg.attn_heads;
  j["dropout"] = cfg.dropout;
  j["residual"] = cfg.residual;
  j["init_seed"] = cfg.init_seed;
  return j;
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig cfg;
  cfg.channels = j.at("channels").get<int64_t>();
  cfg.edge = j.at("edge").get<int64_t>();
  cfg.width = j.at("width").get<int64_t>();
  cfg.attn_heads = j.at("attn_heads").get<int64_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.residual = j.at("residual").get<bool>();
  cfg.init_seed = j.at("init_seed").get<uint64_t>();
  return cfg;
}

}  // namespace

void DenoiserBundle::save(const std::string& path,
                          const std::string& extra_meta_json) const {
  Checkpoint ck;
  nlohmann::ordered_json meta;
  meta["model"] = "denoiser";
  meta["config"] = denoiser_config_json(config);
  meta["sigma"] = noise.sigma;
  meta["ema_decay"] = ema.decay();
  meta["clamped_channels"] = normalizer.clamped_channels;
  meta["extra"] = extra_meta_json.empty()
                      ? nlohmann::ordered_json::object()
                      : nlohmann::ordered_json::parse(extra_meta_json);
  ck.meta_json = meta.dump();
  auto prefs = const_cast<DenoiserUNet*>(net.get())->params();
  store_params(ck, prefs);
  for (const auto& [name, t] : ema.tensors()) ck.put("ema." + name, t);
  ck.put("normalizer.mu", normalizer.mu);
  ck.put("normalizer.sigma", normalizer.sigma);
  save_checkpoint(ck, path);
}

DenoiserBundle DenoiserBundle::load(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  const auto meta = nlohmann::json::parse(ck.meta_json);
  if (meta.value("model", "") != std::string("denoiser"))
    throw std::runtime_error("checkpoint: not a denoiser checkpoint: " + path);
  DenoiserBundle bundle;
  bundle.config = denoiser_config_from_json(meta.at("config"));
  bundle.noise.sigma = meta.at("sigma").get<double>();
  bundle.ema = EmaShadow(meta.at("ema_decay").get<double>());
  bundle.net = std::make_unique<DenoiserUNet>(bundle.config);
  auto prefs = bundle.net->params();
  load_params(ck, prefs);
  for (const ParamRef& p : prefs) {
    const Tensor* t = ck.find("ema." + p.name);
    if (!t)
      throw std::runtime_error("checkpoint: missing EMA tensor for " + p.name);
    bundle.ema.tensors()[p.name] = *t;
  }
  const Tensor* mu = ck.find("normalizer.mu");
  const Tensor* sg = ck.find("normalizer.sigma");
  if (!mu || !sg)
    throw std::runtime_error("checkpoint: missing normalizer tensors");
  bundle.normalizer.mu = *mu;
  bundle.normalizer.sigma = *sg;
  if (meta.contains("clamped_channels"))
    bundle.normalizer.clamped_channels =
        meta.at("clamped_channels").get<std::vector<int64_t>>();
  return bundle;
}

}  // namespace molgen
