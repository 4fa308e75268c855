#include <doctest.h>

#include <cmath>
#include <vector>

#include "molgen/wjs.hpp"

using namespace molgen;

namespace {

const ScoreFn kZeroScore = [](const Tensor& y) { return Tensor::zeros(y.shape); };
const ScoreFn kHarmonicScore = [](const Tensor& y) {
  Tensor g = y;
  for (double& v : g.data) v = -v;
  return g;
};

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;
};

MeanVar moments(const std::vector<double>& xs) {
  MeanVar mv;
  for (double x : xs) mv.mean += x;
  mv.mean /= static_cast<double>(xs.size());
  for (double x : xs) mv.var += (x - mv.mean) * (x - mv.mean);
  mv.var /= static_cast<double>(xs.size());
  return mv;
}

}  // namespace

TEST_CASE("sampler parameters are validated") {
  SamplerParams p;
  CHECK_NOTHROW(p.validate());
  SamplerParams bad = p;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.u = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.delta = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.sigma = -0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("init_chain starts at rest on the noised seed") {
  SamplerParams params;
  params.sigma = 1.8;
  Tensor seed({32, 4, 4, 4});
  for (double& v : seed.data) v = 2.0;
  SamplerState state = init_chain(seed, params, Rng(60));
  CHECK(state.step == 0);
  for (double v : state.v.data) CHECK(v == 0.0);

  std::vector<double> disp;
  for (size_t i = 0; i < state.y.data.size(); ++i)
    disp.push_back(state.y.data[i] - 2.0);
  const MeanVar mv = moments(disp);
  CHECK(std::abs(mv.mean) < 0.25);
  CHECK(mv.var > 2.9);
  CHECK(mv.var < 3.6);  // sigma^2 = 3.24

  SamplerState again = init_chain(seed, params, Rng(60));
  CHECK(again.y.data == state.y.data);
}

TEST_CASE("walking zero steps changes nothing") {
  SamplerParams params;
  Rng seed_rng(61);
  Tensor seed = Tensor::randn({4, 2, 2, 2}, seed_rng);
  SamplerState state = init_chain(seed, params, Rng(62));
  const SamplerState before = state;
  walk(state, 0, params, kZeroScore);
  CHECK(state.y.data == before.y.data);
  CHECK(state.v.data == before.v.data);
  CHECK(state.step == 0);
  CHECK_THROWS_AS(walk(state, -1, params, kZeroScore), std::invalid_argument);
}

TEST_CASE("walk composes: 3 then 5 steps equals 8 straight") {
  SamplerParams params;
  params.delta = 0.2;
  Rng seed_rng(63);
  Tensor seed = Tensor::randn({6, 2, 2, 2}, seed_rng);
  SamplerState split = init_chain(seed, params, Rng(64));
  SamplerState straight = split;
  walk(split, 3, params, kHarmonicScore);
  walk(split, 5, params, kHarmonicScore);
  walk(straight, 8, params, kHarmonicScore);
  CHECK(split.step == 8);
  CHECK(straight.step == 8);
  CHECK(split.y.data == straight.y.data);
  CHECK(split.v.data == straight.v.data);
}

TEST_CASE("velocity reaches its exact stationary variance with no force") {
  // The velocity refresh is exact, so with a zero score the stationary
  // velocity variance is u at any step size.
  SamplerParams params;
  params.gamma = 1.3;
  params.u = 0.7;
  params.delta = 0.15;
  Tensor seed = Tensor::zeros({16, 1, 1, 1});
  SamplerState state = init_chain(seed, params, Rng(65));
  walk(state, 500, params, kZeroScore);
  std::vector<double> vs;
  vs.reserve(16 * 4000);
  for (int t = 0; t < 4000; ++t) {
    walk(state, 1, params, kZeroScore);
    for (double v : state.v.data) vs.push_back(v);
  }
  const MeanVar mv = moments(vs);
  CHECK(std::abs(mv.mean) < 0.05);
  CHECK(mv.var > 0.63);
  CHECK(mv.var < 0.77);  // u = 0.7
}

TEST_CASE("walk samples a unit gaussian given its analytic score") {
  SamplerParams params;
  params.gamma = 1.0;
  params.u = 1.0;
  params.delta = 0.1;
  Tensor seed = Tensor::zeros({16, 1, 1, 1});
  SamplerState state = init_chain(seed, params, Rng(66));
  walk(state, 1000, params, kHarmonicScore);
  std::vector<double> ys;
  ys.reserve(16 * 8000);
  for (int t = 0; t < 8000; ++t) {
    walk(state, 1, params, kHarmonicScore);
    for (double y : state.y.data) ys.push_back(y);
  }
  const MeanVar mv = moments(ys);
  CHECK(std::abs(mv.mean) < 0.1);
  CHECK(mv.var > 0.9);
  CHECK(mv.var < 1.1);
}

TEST_CASE("jump denoises the position without touching the chain") {
  SamplerParams params;
  Rng seed_rng(67);
  Tensor seed = Tensor::randn({4, 2, 2, 2}, seed_rng);
  SamplerState state = init_chain(seed, params, Rng(68));
  walk(state, 4, params, kZeroScore);
  SamplerState copy = state;

  const Tensor clean = jump(state, [](const Tensor& y) {
    Tensor out = y;
    for (double& v : out.data) v += 1.0;
    return out;
  });
  for (size_t i = 0; i < clean.data.size(); ++i)
    CHECK(clean.data[i] == state.y.data[i] + 1.0);

  CHECK(state.y.data == copy.y.data);
  CHECK(state.v.data == copy.v.data);
  CHECK(state.step == copy.step);
  // the chain rng must not have been consumed
  CHECK(state.rng.uniform() == copy.rng.uniform());
}

TEST_CASE("recover_molecule rebuilds a simple molecule from its grid") {
  GridSpec spec;
  spec.edge_length = 16;  // 4 angstrom box
  Molecule mol;
  mol.atoms.push_back({Element::C, {1.70, 2.00, 2.00}});
  mol.atoms.push_back({Element::O, {3.13, 2.00, 2.00}});  // C-O single bond
  const VoxelGrid grid = voxelize(mol, spec);
  const RecoveredMolecule rec = recover_molecule(grid, 0.3);
  CHECK_FALSE(rec.empty);
  REQUIRE(rec.molecule.molecule.atoms.size() == 6);  // C + O + 3H + 1H
  CHECK(rec.hydrogens_added == 4);
  int carbons = 0, oxygens = 0, hydrogens = 0;
  for (const Atom& a : rec.molecule.molecule.atoms) {
    if (a.element == Element::C) ++carbons;
    if (a.element == Element::O) ++oxygens;
    if (a.element == Element::H) ++hydrogens;
  }
  CHECK(carbons == 1);
  CHECK(oxygens == 1);
  CHECK(hydrogens == 4);
  // heavy-atom positions recovered to well under the voxel pitch
  for (const Atom& a : rec.molecule.molecule.atoms) {
    if (a.element == Element::C)
      CHECK((a.position - Vec3{1.70, 2.00, 2.00}).norm() < 0.03);
    if (a.element == Element::O)
      CHECK((a.position - Vec3{3.13, 2.00, 2.00}).norm() < 0.03);
  }
  bool saw_heavy_bond = false;
  for (const Bond& b : rec.molecule.bonds) {
    const Element ei = rec.molecule.molecule.atoms[static_cast<size_t>(b.i)].element;
    const Element ej = rec.molecule.molecule.atoms[static_cast<size_t>(b.j)].element;
    if (ei != Element::H && ej != Element::H) {
      saw_heavy_bond = true;
      CHECK(b.order == 1);
    }
  }
  CHECK(saw_heavy_bond);
}

TEST_CASE("recover_molecule flags an empty decode") {
  GridSpec spec;
  spec.edge_length = 16;
  VoxelGrid grid(spec);
  const RecoveredMolecule rec = recover_molecule(grid, 0.3);
  CHECK(rec.empty);
  CHECK(rec.molecule.molecule.atoms.empty());
}

TEST_CASE("recover_molecule rejects implausibly dense decodes") {
  GridSpec spec;
  spec.edge_length = 16;  // extent 4 A -> at most 128 plausible peaks
  VoxelGrid grid(spec);
  for (int64_t x = 1; x < 16; x += 2)
    for (int64_t y = 1; y < 16; y += 2)
      for (int64_t z = 1; z < 16; z += 2) grid.at(0, x, y, z) = 1.0;
  const RecoveredMolecule rec = recover_molecule(grid, 0.3);
  CHECK(rec.empty);
}

TEST_CASE("recover_molecule rejects impossible coordination numbers") {
  GridSpec spec;
  spec.edge_length = 16;
  Molecule mol;
  const Vec3 center{2.0, 2.0, 2.0};
  mol.atoms.push_back({Element::C, center});
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double scale = 1.4 / std::sqrt(1.0 + phi * phi);
  const double a = 1.0 * scale, b = phi * scale;
  const double verts[12][3] = {{0, a, b},  {0, a, -b},  {0, -a, b},  {0, -a, -b},
                               {a, b, 0},  {a, -b, 0},  {-a, b, 0},  {-a, -b, 0},
                               {b, 0, a},  {-b, 0, a},  {b, 0, -a},  {-b, 0, -a}};
  for (const auto& v : verts)
    mol.atoms.push_back(
        {Element::C, {center.x + v[0], center.y + v[1], center.z + v[2]}});
  const VoxelGrid grid = voxelize(mol, spec);
  const RecoveredMolecule rec = recover_molecule(grid, 0.3);
  CHECK(rec.empty);  // 12 neighbors within bonding range of one atom
}

// ---------------------------------------------------------------------------
// library generation
// ---------------------------------------------------------------------------

namespace {

struct GenFixture {
  VqVaeConfig vq_cfg;
  std::unique_ptr<VqVae> vqvae;
  DenoiserBundle bundle;
  Molecule seed;
  SamplerParams params;

  GenFixture() {
    vq_cfg.grid.edge_length = 16;  // latent edge 4
    vq_cfg.embedding_dim = 6;
    vq_cfg.num_codes = 5;
    vq_cfg.base_channels = 4;
    vq_cfg.attn_heads = 2;
    vq_cfg.init_seed = 9;
    vqvae = std::make_unique<VqVae>(vq_cfg);

    bundle.config.channels = 6;
    bundle.config.edge = 4;
    bundle.config.width = 4;
    bundle.config.attn_heads = 2;
    bundle.config.dropout = 0.0;
    bundle.config.residual = true;
    bundle.config.init_seed = 11;
    bundle.net = std::make_unique<DenoiserUNet>(bundle.config);
    auto refs = bundle.net->params();
    bundle.ema = EmaShadow(0.999);
    bundle.ema.init(refs);
    bundle.noise.sigma = 1.8;
    Rng rng(70);
    std::vector<Tensor> latents;
    for (int i = 0; i < 3; ++i)
      latents.push_back(Tensor::randn({6, 4, 4, 4}, rng));
    bundle.normalizer = fit_normalizer(latents);

    seed.atoms.push_back({Element::C, {0.0, 0.0, 0.0}});
    params.sigma = 1.8;
  }

  GenerationModels models() const {
    GenerationModels m;
    m.vqvae = vqvae.get();
    m.denoiser = &bundle;
    return m;
  }
};

}  // namespace

TEST_CASE("generate_library walks every chain through the sorted checkpoints") {
  GenFixture fx;
  GenerateOptions opts;
  opts.record_timings = false;
  const std::vector<LibrarySample> lib =
      generate_library(fx.seed, {3, 0}, 2, fx.models(), fx.params, 99, opts);
  REQUIRE(lib.size() == 4);
  CHECK(lib[0].chain == 0);
  CHECK(lib[0].k == 0);
  CHECK(lib[1].chain == 0);
  CHECK(lib[1].k == 3);
  CHECK(lib[2].chain == 1);
  CHECK(lib[2].k == 0);
  CHECK(lib[3].chain == 1);
  CHECK(lib[3].k == 3);
  CHECK(lib[0].rng_seed != lib[2].rng_seed);
  for (const LibrarySample& s : lib) CHECK(s.seconds == 0.0);

  // bitwise reproducible
  const std::vector<LibrarySample> again =
      generate_library(fx.seed, {3, 0}, 2, fx.models(), fx.params, 99, opts);
  REQUIRE(again.size() == lib.size());
  for (size_t i = 0; i < lib.size(); ++i) {
    CHECK(again[i].empty_molecule == lib[i].empty_molecule);
    CHECK(again[i].hydrogens_added == lib[i].hydrogens_added);
    REQUIRE(again[i].molecule.molecule.atoms.size() == lib[i].molecule.molecule.atoms.size());
    for (size_t j = 0; j < lib[i].molecule.molecule.atoms.size(); ++j) {
      CHECK(again[i].molecule.molecule.atoms[j].element ==
            lib[i].molecule.molecule.atoms[j].element);
      CHECK(again[i].molecule.molecule.atoms[j].position.x ==
            lib[i].molecule.molecule.atoms[j].position.x);
    }
  }

  // a different master seed reseeds every chain
  const std::vector<LibrarySample> other =
      generate_library(fx.seed, {3, 0}, 2, fx.models(), fx.params, 100, opts);
  for (size_t i = 0; i < lib.size(); ++i)
    CHECK(other[i].rng_seed != lib[i].rng_seed);
}

TEST_CASE("generate_library validates its inputs") {
  GenFixture fx;
  SUBCASE("sigma mismatch") {
    SamplerParams wrong = fx.params;
    wrong.sigma = 0.9;
    CHECK_THROWS_WITH_AS(
        generate_library(fx.seed, {1}, 1, fx.models(), wrong, 1),
        "generate_library: sampler sigma does not match the denoiser "
        "checkpoint",
        std::invalid_argument);
  }
  SUBCASE("no steps") {
    CHECK_THROWS_AS(generate_library(fx.seed, {}, 1, fx.models(), fx.params, 1),
                    std::invalid_argument);
  }
  SUBCASE("bad chain count") {
    CHECK_THROWS_AS(
        generate_library(fx.seed, {1}, 0, fx.models(), fx.params, 1),
        std::invalid_argument);
  }
  SUBCASE("negative step") {
    CHECK_THROWS_AS(
        generate_library(fx.seed, {1, -2}, 1, fx.models(), fx.params, 1),
        std::invalid_argument);
  }
  SUBCASE("missing models") {
    GenerationModels none;
    CHECK_THROWS_AS(generate_library(fx.seed, {1}, 1, none, fx.params, 1),
                    std::invalid_argument);
  }
  SUBCASE("latent shape mismatch") {
    GenFixture narrow;
    narrow.bundle.config.edge = 8;
    narrow.bundle.net = std::make_unique<DenoiserUNet>(narrow.bundle.config);
    CHECK_THROWS_WITH_AS(
        generate_library(narrow.seed, {1}, 1, narrow.models(), narrow.params, 1),
        "generate_library: denoiser latent shape does not match the vqvae",
        std::invalid_argument);
  }
}
