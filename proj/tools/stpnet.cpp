#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stpnet/error.hpp"
#include "stpnet/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

using stpnet::exp::ExperimentKind;

bool accepts(const std::string& command, ExperimentKind kind) {
  static const std::multimap<std::string, ExperimentKind> table{
      {"calibrate", ExperimentKind::Calibrate},    {"train", ExperimentKind::Train},
      {"sample", ExperimentKind::SampleTarget},    {"sample", ExperimentKind::Generate},
      {"classify", ExperimentKind::Classify},      {"sweep", ExperimentKind::SweepStp},
      {"compare", ExperimentKind::Compare},        {"complete", ExperimentKind::PatternComplete},
  };
  auto [lo, hi] = table.equal_range(command);
  for (auto it = lo; it != hi; ++it)
    if (it->second == kind) return true;
  return false;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t workers = stpnet::exp::default_workers();
};

int execute(const std::string& command, const Options& opt) {
  stpnet::exp::RunConfig config;
  try {
    config = stpnet::exp::load_run_config(opt.config);
    if (!accepts(command, config.kind)) {
      throw stpnet::ConfigError("experiment", std::string("'") + to_string(config.kind) +
                                                  "' cannot run under the '" + command + "' command");
    }
    if (opt.seed) {
      config.seeds = {*opt.seed};
      config.document["seeds"] = config.seeds;
    }
    if (opt.out) config.output = *opt.out;
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const auto manifest = stpnet::exp::run(config, opt.workers);
    for (const auto& s : manifest.seeds) {
      std::cout << "seed " << s.seed << ": " << (s.ok ? "ok" : "FAILED: " + s.error) << " (" << s.wall_seconds
                << " s)\n";
    }
    std::cout << "manifest: " << (config.output / "manifest.json").string() << " (config " << manifest.config_hash.substr(0, 12)
              << ")\n";
    return manifest.ok() ? kExitOk : kExitRun;
  } catch (const stpnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitRun;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking-network sampling experiments: calibration, training, sampling and evaluation"};
  app.require_subcommand(1);
  Options opt;

  const std::map<std::string, std::string> commands{
      {"calibrate", "Fit the activation function of a noisy LIF neuron"},
      {"train", "Train a Boltzmann machine on a dataset"},
      {"sample", "Sample a target distribution or generate from a trained machine"},
      {"classify", "Classify held-out images with clamped visible units"},
      {"sweep", "Scan a 2D slice of STP parameters"},
      {"compare", "Gibbs, tempering and spiking samplers on matched sample budgets"},
      {"complete", "Complete half-clamped images"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "Run configuration (JSON, comments allowed)")->required();
    sub->add_option("--seed", opt.seed, "Run this single seed instead of the configured list");
    sub->add_option("--out", opt.out, "Output directory (overrides the config)");
    sub->add_option("--workers", opt.workers, "Concurrent seeds or grid points (default: $STPNET_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return execute(app.get_subcommands().front()->get_name(), opt);
}
