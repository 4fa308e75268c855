#include "molgen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "molgen/molgraph.hpp"

namespace molgen {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed_seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// First k entries of a uniformly shuffled index vector (partial Fisher-Yates).
std::vector<size_t> sample_indices(size_t n, size_t k, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  k = std::min(k, n);
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

// Rotation about the centroid plus a translation small enough that every
// atom stays inside the voxelization margin.
Molecule augment(const Molecule& mol, const GridSpec& grid, double max_shift,
                 Rng& rng) {
  const Molecule centered = center_in_grid(mol, grid);
  double radius = 0.0;
  const Vec3 c = centered.centroid();
  for (const Atom& a : centered.atoms)
    radius = std::max(radius, distance(a.position, c));
  const double slack =
      0.5 * grid.extent() - 2.0 * grid.atom_radius - radius;
  const double shift = std::max(0.0, std::min(max_shift, slack));
  return apply_rigid_transform(
      centered, random_rotation(rng),
      {rng.uniform(-shift, shift), rng.uniform(-shift, shift),
       rng.uniform(-shift, shift)});
}

Tensor encode_grid(const VqVae& model, const Molecule& mol) {
  return model.encode(voxelize(center_in_grid(mol, model.config().grid),
                               model.config().grid));
}

std::ofstream open_csv(const std::string& path, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header << "\n";
  return out;
}

TrainResult train_vqvae(const Config& cfg) {
  const std::string out_dir = cfg.get_string("out.dir", "out");
  fs::create_directories(out_dir);
  const auto mols = load_dataset(cfg.get_string("data.dir", "data"));
  const VqVaeConfig vc = cfg.vqvae_config();
  VqVae model(vc);
  Rng rng(cfg.seed() ^ 0x7672616e6c756bULL);

  // Data-dependent codebook start: encoder columns from a few molecules.
  {
    std::vector<std::vector<double>> cols;
    const size_t probe = std::min<size_t>(8, mols.size());
    const int64_t m3 = vc.latent_edge() * vc.latent_edge() * vc.latent_edge();
    for (size_t i = 0; i < probe; ++i) {
      const Tensor z_e = encode_grid(model, mols[i]);
      for (int64_t p = 0; p < m3; ++p) {
        std::vector<double> col(static_cast<size_t>(vc.embedding_dim));
        for (int64_t c = 0; c < vc.embedding_dim; ++c)
          col[static_cast<size_t>(c)] = z_e.data[static_cast<size_t>(c * m3 + p)];
        cols.push_back(std::move(col));
      }
    }
    Rng init_rng = rng.fork(0xC0DEB007ULL);
    model.codebook().init_from_samples(cols, init_rng);
  }

  AdamW opt(cfg.optimizer_config("vqvae"));
  EmaShadow ema(cfg.get_double("ema.decay", 0.999));
  const int epochs = static_cast<int>(cfg.get_int("train.epochs.vqvae", 30));
  const size_t batch = static_cast<size_t>(cfg.get_int("train.batch", 32));
  const double frac = cfg.get_double("train.subsample", 0.1);
  const double shift = cfg.get_double("augment.translation", 0.5);
  if (epochs < 1 || batch < 1 || frac <= 0.0 || frac > 1.0)
    throw std::invalid_argument("training: bad epoch/batch/subsample settings");

  TrainResult result;
  result.loss_csv_path = out_dir + "/vqvae_loss.csv";
  std::ofstream csv = open_csv(result.loss_csv_path, "epoch,term,value");
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    model.codebook().reset_usage();
    const size_t want = std::max<size_t>(
        1, static_cast<size_t>(std::ceil(frac * static_cast<double>(mols.size()))));
    const auto picks = sample_indices(mols.size(), want, rng);
    VqLoss sums;
    for (size_t ofs = 0; ofs < picks.size(); ofs += batch) {
      std::vector<VoxelGrid> grids;
      for (size_t i = ofs; i < std::min(ofs + batch, picks.size()); ++i)
        grids.push_back(voxelize(augment(mols[picks[i]], vc.grid, shift, rng),
                                 vc.grid));
      const VqLoss l = vq_train_step(grids, model, opt, &ema);
      const double w = static_cast<double>(grids.size());
      sums.reconstruction += w * l.reconstruction;
      sums.codebook += w * l.codebook;
      sums.commitment += w * l.commitment;
      sums.total += w * l.total;
    }
    const double inv = 1.0 / static_cast<double>(picks.size());
    csv << epoch << ",reconstruction," << sums.reconstruction * inv << "\n";
    csv << epoch << ",codebook," << sums.codebook * inv << "\n";
    csv << epoch << ",commitment," << sums.commitment * inv << "\n";
    csv << epoch << ",total," << sums.total * inv << "\n";
    csv.flush();
    result.epoch_total_loss.push_back(sums.total * inv);

    // Dead-code restarts: codes unused for a whole epoch are re-seeded from
    // fresh encoder columns, so the codebook keeps tracking the moving
    // encoder output instead of collapsing onto a handful of survivors.
    Codebook& cb = model.codebook();
    if (epoch < epochs && cb.codes_used() < cb.size()) {
      std::vector<std::vector<double>> cols;
      const int64_t m3 = vc.latent_edge() * vc.latent_edge() * vc.latent_edge();
      for (int probe = 0; probe < 2; ++probe) {
        const Tensor z_e = encode_grid(model, mols[rng.below(mols.size())]);
        for (int64_t p = 0; p < m3; ++p) {
          std::vector<double> col(static_cast<size_t>(vc.embedding_dim));
          for (int64_t c = 0; c < vc.embedding_dim; ++c)
            col[static_cast<size_t>(c)] =
                z_e.data[static_cast<size_t>(c * m3 + p)];
          cols.push_back(std::move(col));
        }
      }
      for (int64_t k = 0; k < cb.size(); ++k) {
        if (cb.usage[static_cast<size_t>(k)] != 0) continue;
        const auto& col = cols[rng.below(cols.size())];
        for (int64_t c = 0; c < vc.embedding_dim; ++c)
          cb.embeddings.data[static_cast<size_t>(k * vc.embedding_dim + c)] =
              col[static_cast<size_t>(c)] + 0.01 * rng.normal();
      }
    }
  }
  const double usage_fraction =
      static_cast<double>(model.codebook().codes_used()) /
      static_cast<double>(model.codebook().size());

  // Reconstruction probe on held-out-free centered molecules.
  double iou = 0.0;
  const size_t probe_n = std::min<size_t>(16, mols.size());
  for (size_t i = 0; i < probe_n; ++i) {
    const VoxelGrid in =
        voxelize(center_in_grid(mols[i], vc.grid), vc.grid);
    const LatentCode code = quantize(model.encode(in), model.codebook());
    iou += grid_iou(in, model.decode(code.z_q), 0.5);
  }
  iou /= static_cast<double>(probe_n);
  result.final_metric = iou;

  nlohmann::ordered_json meta;
  meta["config_hash"] = cfg.hash();
  meta["epochs"] = epochs;
  meta["usage_fraction"] = usage_fraction;
  meta["probe_iou"] = iou;
  result.checkpoint_path = out_dir + "/vqvae.ckpt";
  model.save(result.checkpoint_path, &ema, meta.dump());
  return result;
}

TrainResult train_dae(const Config& cfg) {
  const std::string out_dir = cfg.get_string("out.dir", "out");
  fs::create_directories(out_dir);
  const auto mols = load_dataset(cfg.get_string("data.dir", "data"));
  VqVae vq(cfg.vqvae_config());
  vq.load(cfg.get_string("vq.checkpoint", out_dir + "/vqvae.ckpt"), nullptr);
  Rng rng(cfg.seed() ^ 0x6461657472ULL);

  // Normalizer statistics come from the clean (un-augmented) latents.
  std::vector<Tensor> latents;
  latents.reserve(mols.size());
  for (const Molecule& mol : mols)
    latents.push_back(quantize(encode_grid(vq, mol), vq.codebook()).z_q);
  const LatentNormalizer normalizer = fit_normalizer(latents);

  const DenoiserConfig dc = cfg.denoiser_config();
  auto net = std::make_unique<DenoiserUNet>(dc);
  AdamW opt(cfg.optimizer_config("dae"));
  EmaShadow ema(cfg.get_double("ema.decay", 0.999));
  const NoiseModel noise{cfg.get_double("sigma", 1.8)};
  const int epochs = static_cast<int>(cfg.get_int("train.epochs.dae", 30));
  const size_t batch = static_cast<size_t>(cfg.get_int("train.batch", 32));
  const double frac = cfg.get_double("train.subsample", 0.1);
  const double shift = cfg.get_double("augment.translation", 0.5);
  if (epochs < 1 || batch < 1 || frac <= 0.0 || frac > 1.0)
    throw std::invalid_argument("training: bad epoch/batch/subsample settings");

  TrainResult result;
  result.loss_csv_path = out_dir + "/dae_loss.csv";
  std::ofstream csv = open_csv(result.loss_csv_path, "epoch,term,value");
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const size_t want = std::max<size_t>(
        1, static_cast<size_t>(std::ceil(frac * static_cast<double>(mols.size()))));
    const auto picks = sample_indices(mols.size(), want, rng);
    double sum = 0.0;
    for (size_t ofs = 0; ofs < picks.size(); ofs += batch) {
      std::vector<Tensor> zs;
      for (size_t i = ofs; i < std::min(ofs + batch, picks.size()); ++i) {
        const Molecule aug = augment(mols[picks[i]], vq.config().grid, shift, rng);
        const Tensor z_e = vq.encode(voxelize(aug, vq.config().grid));
        zs.push_back(normalizer.normalize(quantize(z_e, vq.codebook()).z_q));
      }
      const double l = dae_train_step(zs, *net, noise, opt, &ema, rng);
      sum += static_cast<double>(zs.size()) * l;
    }
    const double mean = sum / static_cast<double>(picks.size());
    csv << epoch << ",loss," << mean << "\n";
    csv.flush();
    result.epoch_total_loss.push_back(mean);
  }
  result.final_metric = result.epoch_total_loss.back();

  nlohmann::ordered_json meta;
  meta["config_hash"] = cfg.hash();
  meta["epochs"] = epochs;
  DenoiserBundle bundle{dc, std::move(net), ema, normalizer, noise};
  result.checkpoint_path = out_dir + "/denoiser.ckpt";
  bundle.save(result.checkpoint_path, meta.dump());
  return result;
}

}  // namespace

TrainResult run_training(const std::string& stage, const Config& cfg) {
  if (stage == "vqvae") return train_vqvae(cfg);
  if (stage == "dae") return train_dae(cfg);
  throw std::invalid_argument("unknown training stage: " + stage);
}

// --------------------------------------------------------------------------
// generation
// --------------------------------------------------------------------------

GenerateRunResult run_generate(const Config& cfg, const std::string& seed_file,
                               const std::vector<int64_t>& steps, int chains) {
  const std::string out_dir = cfg.get_string("out.dir", "out");
  VqVae vq(cfg.vqvae_config());
  vq.load(cfg.get_string("vq.checkpoint", out_dir + "/vqvae.ckpt"), nullptr);
  const DenoiserBundle bundle = DenoiserBundle::load(
      cfg.get_string("dae.checkpoint", out_dir + "/denoiser.ckpt"));
  const Molecule seed = load_xyz_file(seed_file);

  GenerationModels models;
  models.vqvae = &vq;
  models.denoiser = &bundle;
  models.use_ema = cfg.get_bool("sample.use_ema", false);
  const SamplerParams params = cfg.sampler_params();
  GenerateOptions options;
  options.peak_threshold = cfg.get_double("sample.peak_threshold", 0.3);
  options.record_timings = !cfg.get_bool("deterministic_timings", false);
  const auto samples =
      generate_library(seed, steps, chains, models, params, cfg.seed(), options);

  GenerateRunResult result;
  result.library_dir = cfg.get_string("library.dir", out_dir + "/library");
  fs::create_directories(result.library_dir);
  std::ofstream timings =
      open_csv(result.library_dir + "/timings.csv", "chain,k,seconds");

  nlohmann::ordered_json manifest;
  manifest["config_hash"] = cfg.hash();
  manifest["seed_file"] = seed_file;
  manifest["seed_graph_hash"] = graph_hash(infer_bonds(seed));
  manifest["master_seed"] = cfg.seed();
  manifest["sigma"] = params.sigma;
  manifest["gamma"] = params.gamma;
  manifest["u"] = params.u;
  manifest["delta"] = params.delta;
  manifest["chains"] = chains;
  manifest["steps"] = steps;
  manifest["peak_threshold"] = options.peak_threshold;
  manifest["samples"] = nlohmann::ordered_json::array();
  for (const LibrarySample& s : samples) {
    char name[48];
    std::snprintf(name, sizeof(name), "sample_c%03d_k%06lld.json", s.chain,
                  static_cast<long long>(s.k));
    save_bonded_json(s.molecule,
                     (fs::path(result.library_dir) / name).string());
    nlohmann::ordered_json entry;
    entry["chain"] = s.chain;
    entry["k"] = s.k;
    entry["rng_seed"] = s.rng_seed;
    entry["empty"] = s.empty_molecule;
    entry["hydrogens_added"] = s.hydrogens_added;
    entry["seconds"] = s.seconds;
    entry["file"] = name;
    manifest["samples"].push_back(entry);
    timings << s.chain << "," << s.k << "," << s.seconds << "\n";
  }
  result.manifest_path = result.library_dir + "/manifest.json";
  std::ofstream mf(result.manifest_path);
  if (!mf) throw std::runtime_error("cannot write " + result.manifest_path);
  mf << manifest.dump(2) << "\n";
  result.samples = static_cast<int>(samples.size());
  return result;
}

// --------------------------------------------------------------------------
// evaluation
// --------------------------------------------------------------------------

MetricsReport run_evaluate(const Config& cfg, const std::string& library_dir,
                           const std::string& seed_file,
                           const std::string& data_dir, int repeats) {
  if (repeats < 1) throw std::invalid_argument("evaluate: repeats must be >= 1");
  std::ifstream mf(library_dir + "/manifest.json");
  if (!mf)
    throw std::runtime_error("cannot open " + library_dir + "/manifest.json");
  const auto manifest = nlohmann::json::parse(mf);

  std::vector<BondedMolecule> generated;
  std::vector<double> timings;
  for (const auto& entry : manifest.at("samples")) {
    generated.push_back(load_bonded_json(
        (fs::path(library_dir) / entry.at("file").get<std::string>()).string()));
    timings.push_back(entry.at("seconds").get<double>());
  }
  const BondedMolecule seed = infer_bonds(load_xyz_file(seed_file));
  std::vector<BondedMolecule> reference;
  for (const Molecule& mol : load_dataset(data_dir))
    reference.push_back(infer_bonds(mol));

  MetricsReport report;
  std::string first;
  for (int r = 0; r < repeats; ++r) {
    report = evaluate_library(generated, seed, reference, timings);
    const std::string text = report_to_json(report, repeats, cfg.seed());
    if (r == 0)
      first = text;
    else if (text != first)
      throw std::runtime_error("evaluate: repeated runs disagree");
  }
  std::ofstream js(library_dir + "/metrics.json");
  if (!js) throw std::runtime_error("cannot write metrics.json");
  js << first;
  std::ofstream tb(library_dir + "/metrics.txt");
  if (!tb) throw std::runtime_error("cannot write metrics.txt");
  tb << report_to_table(report, repeats, cfg.seed());
  return report;
}

// --------------------------------------------------------------------------
// benchmark
// --------------------------------------------------------------------------

std::string BenchmarkReport::to_json() const {
  nlohmann::ordered_json j;
  j["latent_elements"] = latent_elements;
  j["voxel_elements"] = voxel_elements;
  j["ratio"] = ratio;
  if (latent_step_seconds) j["latent_step_seconds"] = *latent_step_seconds;
  if (voxel_step_seconds) j["voxel_step_seconds"] = *voxel_step_seconds;
  if (speedup) j["speedup"] = *speedup;
  return j.dump(2) + "\n";
}

namespace {

double measure_walk_step(const DenoiserConfig& dc, const SamplerParams& params,
                         int steps, uint64_t seed) {
  DenoiserUNet net(dc);
  const NoiseModel noise{params.sigma};
  const ScoreFn score_fn = [&](const Tensor& y) {
    return score(y, [&](const Tensor& t) { return net.denoise(t); }, noise);
  };
  const Tensor origin = Tensor::zeros({dc.channels, dc.edge, dc.edge, dc.edge});
  SamplerState state = init_chain(origin, params, Rng(seed));
  walk(state, 1, params, score_fn);  // warm-up outside the timed window
  const auto t0 = Clock::now();
  walk(state, steps, params, score_fn);
  return elapsed_seconds(t0) / static_cast<double>(steps);
}

}  // namespace

BenchmarkReport run_benchmark(const Config& cfg, int measure_steps) {
  BenchmarkReport r;
  // Full-size preset: 1024-channel 8^3 latents for 8-channel 64^3 grids.
  r.latent_elements = int64_t{1024} * 8 * 8 * 8;
  r.voxel_elements = int64_t{8} * 64 * 64 * 64;
  r.ratio = r.voxel_elements / r.latent_elements;
  if (measure_steps > 0) {
    const SamplerParams params = cfg.sampler_params();
    const DenoiserConfig lat = cfg.denoiser_config();
    DenoiserConfig vox = lat;
    vox.channels = cfg.grid().num_channels();
    vox.edge = cfg.grid().edge_length;
    r.latent_step_seconds =
        measure_walk_step(lat, params, measure_steps, cfg.seed() ^ 0xBE11C4);
    r.voxel_step_seconds =
        measure_walk_step(vox, params, measure_steps, cfg.seed() ^ 0xBE11C5);
    r.speedup = *r.voxel_step_seconds / *r.latent_step_seconds;
  }
  return r;
}

}  // namespace molgen
