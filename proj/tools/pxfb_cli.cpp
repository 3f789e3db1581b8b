// Command-line front end: run experiments from config files, verify finished
// run directories, and render plots from their CSV artifacts.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pxfb/experiment.hpp"
#include "pxfb/parallel.hpp"

namespace {

// 0 success, 2 bad input, 3 iteration did not converge, 4 certification failed
constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNonconvergence = 3;
constexpr int kExitCertification = 4;

int exit_code_for(const pxfb::Error& e) {
  switch (e.kind()) {
    case pxfb::ErrorKind::nonconvergence:
      return kExitNonconvergence;
    case pxfb::ErrorKind::certification_failure:
      return kExitCertification;
    default:
      return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"free-boundary toolkit for variable-exponent problems"};
  app.require_subcommand(1);

  std::string config_path, run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 0;

  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", config_path, "config file (.json or .toml)")
      ->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "override the output directory");
  run->add_option("--threads", threads, "worker thread count (0 = hardware)");

  CLI::App* verify = app.add_subcommand("verify", "re-check a finished run");
  verify->add_option("run_dir", run_dir, "run directory to verify")->required();

  CLI::App* plot = app.add_subcommand("plot", "render SVG plots for a run");
  plot->add_option("run_dir", run_dir, "run directory to plot")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0) pxfb::par::set_threads(threads);

    if (run->parsed()) {
      pxfb::ExperimentConfig cfg = pxfb::load_config(config_path);
      pxfb::RunRecord rec = pxfb::run_experiment(cfg, seed, out_dir);
      std::cout << "run " << rec.run_dir << "\n";
      for (const auto& [k, v] : rec.metrics)
        std::cout << "  " << k << " = " << pxfb::format_double(v) << "\n";
      if (!rec.certification_pass) {
        std::cout << "certification FAILED\n";
        return kExitCertification;
      }
      std::cout << "ok\n";
      return kExitOk;
    }

    if (verify->parsed()) {
      std::string report;
      bool ok = pxfb::verify_run(run_dir, &report);
      std::cout << report;
      return ok ? kExitOk : kExitCertification;
    }

    // plot
    std::vector<std::string> files = pxfb::emit_plots(run_dir);
    for (const std::string& f : files) std::cout << "wrote " << f << "\n";
    std::cout << files.size() << " plot(s)\n";
    return kExitOk;
  } catch (const pxfb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
