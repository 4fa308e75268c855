// Command-line front end: dataset generation, voxelization, the two training
// stages, seeded sampling, metrics, and the latent-vs-voxel benchmark.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "molgen/pipeline.hpp"

namespace {

molgen::Config load_config(const std::string& path, int64_t seed_override) {
  molgen::Config cfg = path.empty() ? molgen::Config()
                                    : molgen::Config::from_file(path);
  if (seed_override >= 0) cfg.set("seed", std::to_string(seed_override));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent walk-jump molecular generation"};
  app.require_subcommand(1);

  std::string config_path;
  int64_t seed_override = -1;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--seed", seed_override, "override the config seed");

  auto* gen_data = app.add_subcommand("gen-data", "write a toy dataset");
  std::string data_out = "data";
  int data_count = -1;
  gen_data->add_option("--out", data_out, "output directory");
  gen_data->add_option("--count", data_count, "number of molecules");

  auto* vox = app.add_subcommand("voxelize", "molecule -> density grid file");
  std::string vox_in, vox_out = "grid.vxg";
  vox->add_option("--in", vox_in, "input .xyz file")->required();
  vox->add_option("--out", vox_out, "output grid file");

  auto* train_vq = app.add_subcommand("train-vqvae", "train the autoencoder");
  auto* train_dae = app.add_subcommand("train-dae", "train the denoiser");

  auto* sample = app.add_subcommand("sample", "seeded walk-jump generation");
  std::string seed_file;
  std::vector<int64_t> steps{10, 50, 100, 200};
  int chains = 4;
  sample->add_option("--seed-file", seed_file, "seed molecule (.xyz)")
      ->required();
  sample->add_option("--steps", steps, "walk lengths to emit at")
      ->delimiter(',');
  sample->add_option("--chains", chains, "number of chains");

  auto* eval = app.add_subcommand("evaluate", "score a generated library");
  std::string library_dir, eval_seed_file, eval_data_dir = "data";
  int repeats = 1;
  eval->add_option("--library", library_dir, "library directory")->required();
  eval->add_option("--seed-file", eval_seed_file, "seed molecule (.xyz)")
      ->required();
  eval->add_option("--data", eval_data_dir, "reference dataset directory");
  eval->add_option("--repeats", repeats, "identical-rerun count");

  auto* bench = app.add_subcommand("benchmark", "latent vs voxel walk cost");
  int measure_steps = 0;
  bench->add_option("--measure-steps", measure_steps,
                    "timed walk steps (0 = arithmetic only)");

  // --config / --seed are valid both before and after the subcommand name.
  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const molgen::Config cfg = load_config(config_path, seed_override);
    if (*gen_data) {
      molgen::ToyDatasetSpec spec;
      spec.count = data_count >= 0
                       ? data_count
                       : static_cast<int>(cfg.get_int("dataset.count", 100));
      spec.min_heavy = static_cast<int>(cfg.get_int("dataset.min_heavy", 3));
      spec.max_heavy = static_cast<int>(cfg.get_int("dataset.max_heavy", 12));
      spec.seed = cfg.seed();
      const auto mols = molgen::generate_toy_dataset(spec);
      molgen::save_dataset(mols, data_out);
      std::printf("wrote %zu molecules to %s\n", mols.size(), data_out.c_str());
    } else if (*vox) {
      const molgen::GridSpec grid = cfg.grid();
      const molgen::Molecule mol = molgen::center_in_grid(
          molgen::load_xyz_file(vox_in), grid);
      molgen::save_grid(molgen::voxelize(mol, grid), vox_out);
      std::printf("wrote %s\n", vox_out.c_str());
    } else if (*train_vq) {
      const auto r = molgen::run_training("vqvae", cfg);
      std::printf("checkpoint %s\nprobe_iou %.6f\n", r.checkpoint_path.c_str(),
                  r.final_metric);
    } else if (*train_dae) {
      const auto r = molgen::run_training("dae", cfg);
      std::printf("checkpoint %s\nfinal_loss %.6f\n", r.checkpoint_path.c_str(),
                  r.final_metric);
    } else if (*sample) {
      const auto r = molgen::run_generate(cfg, seed_file, steps, chains);
      std::printf("library %s\nsamples %d\n", r.library_dir.c_str(), r.samples);
    } else if (*eval) {
      const auto report = molgen::run_evaluate(cfg, library_dir, eval_seed_file,
                                               eval_data_dir, repeats);
      std::fputs(
          molgen::report_to_table(report, repeats, cfg.seed()).c_str(), stdout);
    } else if (*bench) {
      const auto report = molgen::run_benchmark(cfg, measure_steps);
      std::fputs(report.to_json().c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
