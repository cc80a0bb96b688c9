#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "evgo/cli.hpp"
#include "evgo/core.hpp"

int main(int argc, char** argv) {
  CLI::App app{"evgo: event-augmented global pose/depth optimization"};
  app.require_subcommand(1);

  int threads = evgo::default_thread_count();
  long long seed = -1;
  app.add_option("--threads", threads, "worker threads (default: EVGO_THREADS env or 1)");
  app.add_option("--seed", seed, "override scene seed (simulate only)");

  std::string scene, manifest, config, out, pred_dir, gt_dir, mode{"day"};

  auto* sim = app.add_subcommand("simulate", "render a synthetic scene and its event stream");
  sim->add_option("scene", scene, "scene.json spec")->required();
  sim->add_option("--out", out, "output directory")->required();

  auto* opt = app.add_subcommand("optimize", "run the global optimization on a dataset manifest");
  opt->add_option("manifest", manifest, "dataset manifest.json")->required();
  opt->add_option("--config", config, "config JSON (defaults when omitted)");
  opt->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "depth and trajectory metrics against ground truth");
  ev->add_option("pred", pred_dir, "prediction directory")->required();
  ev->add_option("gt", gt_dir, "ground-truth directory")->required();
  ev->add_option("--out", out, "output directory")->required();

  auto* sy = app.add_subcommand("sync", "align image/depth/event/pose streams");
  sy->add_option("manifest", manifest, "sync manifest.json")->required();
  sy->add_option("--mode", mode, "day or night")->required();
  sy->add_option("--config", config, "config JSON");
  sy->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return evgo::cmd_simulate(scene, out, seed, threads);
    if (opt->parsed()) return evgo::cmd_optimize(manifest, config, out, threads);
    if (ev->parsed()) return evgo::cmd_eval(pred_dir, gt_dir, out);
    if (sy->parsed()) return evgo::cmd_sync(manifest, mode, config, out);
  } catch (const evgo::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
