#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "fusestab/errors.hpp"

int main(int argc, char** argv) {
  using namespace fusestab;
  CLI::App app{"Gyroscope-driven video stabilization: simulate, stabilize, train, evaluate"};
  app.require_subcommand(1);

  std::string spec, outdir;
  auto* sim = app.add_subcommand("simulate", "Write a synthetic capture (logs, flow, frames) from a spec file");
  sim->add_option("spec", spec, "Simulation spec (ini)")->required()->check(CLI::ExistingFile);
  sim->add_option("outdir", outdir, "Output directory")->required();

  std::string config;
  cli::StabilizeOverrides so;
  auto* stab = app.add_subcommand("stabilize", "Compute the virtual path and warp meshes for a capture");
  stab->add_option("config", config, "Run configuration (ini)")->required();
  stab->add_option("--backend", so.backend, "optimize, infer or locked (overrides the config)");
  stab->add_option("--seed", so.seed, "Seed (overrides the config)");
  stab->add_option("--output", so.output, "Output directory (overrides the config)");

  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> train_out;
  auto* tr = app.add_subcommand("train", "Train the predictor on the synthetic training set");
  tr->add_option("config", config, "Run configuration (ini)")->required();
  tr->add_option("--seed", train_seed, "Seed (overrides the config)");
  tr->add_option("--output", train_out, "Output directory (overrides the config)");

  std::string in_dir, out_dir;
  auto* ev = app.add_subcommand("evaluate", "Score a stabilize output directory");
  ev->add_option("in", in_dir, "Output directory of stabilize")->required();
  ev->add_option("out", out_dir, "Report directory")->required();

  std::uint64_t gc_seed = 0;
  int gc_instances = 20;
  auto* gc = app.add_subcommand("gradcheck", "Compare network gradients with finite differences");
  gc->add_option("--seed", gc_seed, "Instance seed");
  gc->add_option("--instances", gc_instances, "Random instances")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      cli::simulate(spec, outdir);
    } else if (*stab) {
      cli::stabilize(config, so);
    } else if (*tr) {
      cli::train(config, train_seed, train_out);
    } else if (*ev) {
      cli::evaluate(in_dir, out_dir);
    } else if (*gc) {
      return cli::gradcheck(gc_seed, gc_instances) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
