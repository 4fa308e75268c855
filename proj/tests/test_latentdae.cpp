#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "molgen/latentdae.hpp"

using namespace molgen;

namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.channels = 4;
  cfg.edge = 4;
  cfg.width = 4;
  cfg.attn_heads = 2;
  cfg.dropout = 0.0;
  cfg.residual = true;
  cfg.init_seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("fit_normalizer computes population statistics per channel") {
  Tensor a({2, 1, 1, 2});
  Tensor b({2, 1, 1, 2});
  // channel 0 holds {1,3,5,7}; channel 1 is the constant 2
  a.data = {1, 3, 2, 2};
  b.data = {5, 7, 2, 2};
  const LatentNormalizer nz = fit_normalizer({a, b});
  REQUIRE(nz.mu.numel() == 2);
  CHECK(nz.mu.data[0] == doctest::Approx(4.0));
  CHECK(nz.mu.data[1] == doctest::Approx(2.0));
  CHECK(nz.sigma.data[0] == doctest::Approx(std::sqrt(5.0)));  // divide by N
  CHECK(nz.sigma.data[1] == doctest::Approx(1e-8));
  REQUIRE(nz.clamped_channels.size() == 1);
  CHECK(nz.clamped_channels[0] == 1);

  // fitted data maps to zero mean, unit variance on the live channel
  const Tensor na = nz.normalize(a);
  const Tensor nb = nz.normalize(b);
  const double mean =
      (na.data[0] + na.data[1] + nb.data[0] + nb.data[1]) / 4.0;
  const double var = (na.data[0] * na.data[0] + na.data[1] * na.data[1] +
                      nb.data[0] * nb.data[0] + nb.data[1] * nb.data[1]) /
                     4.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0));
}

TEST_CASE("normalize and unnormalize are inverse maps") {
  Rng rng(50);
  std::vector<Tensor> latents;
  for (int i = 0; i < 3; ++i)
    latents.push_back(Tensor::randn({5, 2, 2, 2}, rng));
  const LatentNormalizer nz = fit_normalizer(latents);
  CHECK(nz.clamped_channels.empty());
  const Tensor z = Tensor::randn({5, 2, 2, 2}, rng);
  const Tensor round = nz.unnormalize(nz.normalize(z));
  for (size_t i = 0; i < z.data.size(); ++i)
    CHECK(round.data[i] == doctest::Approx(z.data[i]).epsilon(1e-12));
}

TEST_CASE("fit_normalizer rejects empty or mismatched input") {
  CHECK_THROWS_AS(fit_normalizer({}), std::exception);
  Tensor a({2, 1, 1, 1});
  Tensor b({3, 1, 1, 1});
  CHECK_THROWS_AS(fit_normalizer({a, b}), std::exception);
}

TEST_CASE("corrupt adds noise with the configured scale") {
  Rng rng(51);
  NoiseModel noise;
  noise.sigma = 1.8;
  Tensor z({8, 8, 8, 8});
  for (double& v : z.data) v = 0.25;  // nonzero base to catch additivity bugs
  const Tensor y = corrupt(z, noise, rng);
  REQUIRE(y.shape == z.shape);
  double mean = 0.0, var = 0.0;
  for (size_t i = 0; i < y.data.size(); ++i) mean += y.data[i] - z.data[i];
  mean /= static_cast<double>(y.data.size());
  for (size_t i = 0; i < y.data.size(); ++i) {
    const double e = y.data[i] - z.data[i] - mean;
    var += e * e;
  }
  var /= static_cast<double>(y.data.size());
  CHECK(std::abs(mean) < 0.15);
  CHECK(var > 2.9);
  CHECK(var < 3.6);  // sigma^2 = 3.24

  // same seed, same draw
  Rng rng2(51);
  const Tensor y2 = corrupt(z, noise, rng2);
  CHECK(y2.data == y.data);
}

TEST_CASE("score follows the denoiser displacement over sigma squared") {
  NoiseModel noise;
  noise.sigma = 2.0;
  Rng rng(52);
  const Tensor y = Tensor::randn({3, 2, 2, 2}, rng);

  SUBCASE("identity denoiser gives zero score") {
    const Tensor g = score(y, [](const Tensor& t) { return t; }, noise);
    for (double v : g.data) CHECK(v == 0.0);
  }
  SUBCASE("constant displacement") {
    const Tensor g = score(
        y,
        [](const Tensor& t) {
          Tensor out = t;
          for (double& v : out.data) v += 0.7;
          return out;
        },
        noise);
    for (size_t i = 0; i < g.data.size(); ++i) {
      const double expect = ((y.data[i] + 0.7) - y.data[i]) / 4.0;
      CHECK(g.data[i] == expect);
    }
  }
}

TEST_CASE("denoiser unet preserves the latent shape") {
  const DenoiserConfig cfg = tiny_config();
  DenoiserUNet net(cfg);
  Rng rng(53);
  const Tensor y = Tensor::randn({4, 4, 4, 4}, rng);
  const Tensor out = net.denoise(y);
  CHECK(out.shape == y.shape);
  for (double v : out.data) CHECK(std::isfinite(v));

  Tensor bad({4, 3, 3, 3});
  CHECK_THROWS_AS(net.denoise(bad), std::exception);
}

TEST_CASE("residual flag adds the input to the core prediction") {
  DenoiserConfig with = tiny_config();
  DenoiserConfig without = tiny_config();
  without.residual = false;
  DenoiserUNet a(with), b(without);  // same init seed -> same weights
  Rng rng(54);
  const Tensor y = Tensor::randn({4, 4, 4, 4}, rng);
  const Tensor ra = a.denoise(y);
  const Tensor rb = b.denoise(y);
  for (size_t i = 0; i < y.data.size(); ++i)
    CHECK(ra.data[i] == rb.data[i] + y.data[i]);
}

TEST_CASE("training steps reduce the denoising loss") {
  const DenoiserConfig cfg = tiny_config();
  DenoiserUNet net(cfg);
  Rng rng(55);
  std::vector<Tensor> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(Tensor::randn({4, 4, 4, 4}, rng));
  NoiseModel noise;
  noise.sigma = 0.5;
  AdamWConfig oc;
  oc.lr = 2e-3;
  oc.weight_decay = 0.0;
  AdamW opt(oc);
  EmaShadow ema(0.9);
  Rng train_rng(56);
  double first5 = 0.0, last5 = 0.0;
  const int steps = 60;
  for (int s = 0; s < steps; ++s) {
    const double loss = dae_train_step(batch, net, noise, opt, &ema, train_rng);
    CHECK(std::isfinite(loss));
    if (s < 5) first5 += loss;
    if (s >= steps - 5) last5 += loss;
  }
  CHECK(last5 < first5);
  CHECK_FALSE(ema.empty());  // shadow initialized lazily on the first step
}

TEST_CASE("denoiser bundle round trip") {
  DenoiserBundle bundle;
  bundle.config = tiny_config();
  bundle.net = std::make_unique<DenoiserUNet>(bundle.config);
  bundle.ema = EmaShadow(0.995);
  auto refs = bundle.net->params();
  bundle.ema.init(refs);
  bundle.noise.sigma = 1.25;
  Rng rng(57);
  std::vector<Tensor> latents;
  for (int i = 0; i < 3; ++i) latents.push_back(Tensor::randn({4, 4, 4, 4}, rng));
  bundle.normalizer = fit_normalizer(latents);

  const std::string path =
      (std::filesystem::temp_directory_path() / "dae_roundtrip.ckpt").string();
  bundle.save(path, "{}");
  const DenoiserBundle loaded = DenoiserBundle::load(path);
  std::filesystem::remove(path);

  CHECK(loaded.noise.sigma == 1.25);
  CHECK(loaded.config.channels == 4);
  CHECK(loaded.config.residual == true);
  CHECK(loaded.normalizer.mu.data == bundle.normalizer.mu.data);
  CHECK(loaded.normalizer.sigma.data == bundle.normalizer.sigma.data);
  CHECK(loaded.normalizer.clamped_channels ==
        bundle.normalizer.clamped_channels);

  const Tensor y = Tensor::randn({4, 4, 4, 4}, rng);
  const Tensor da = bundle.net->denoise(y);
  const Tensor db = loaded.net->denoise(y);
  CHECK(da.data == db.data);
}
