// gfomc: run coupling experiments, the verification suite and parameter sweeps.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfomc/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string preset;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config, "Config file (key = value lines)");
  app->add_option("--preset", flags.preset, "Built-in preset name");
  app->add_option("--seed", flags.seed, "Master seed");
  app->add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", flags.out, "Output directory");
}

// Preset, then config file, then environment (threads, out only), then flags.
gfomc::ExperimentConfig resolve(const CommonFlags& flags, const CLI::App* app) {
  gfomc::KeyValues kv;
  if (!flags.preset.empty()) kv.emplace_back("preset", flags.preset);
  if (!flags.config.empty()) {
    auto file = gfomc::read_config_file(flags.config);
    kv.insert(kv.end(), file.begin(), file.end());
  }
  auto cfg = gfomc::config_from(kv);
  if (const char* env = std::getenv("GFOMC_THREADS")) cfg.threads = std::atoi(env);
  if (const char* env = std::getenv("GFOMC_OUT")) cfg.out = env;
  if (app->count("--seed")) cfg.seed = flags.seed;
  if (app->count("--threads")) cfg.threads = flags.threads;
  if (app->count("--out")) cfg.out = flags.out;
  return cfg;
}

void print_summary(const gfomc::RunManifest& m) {
  for (const auto& s : m.summaries)
    std::cout << "n=" << s.n << " ok=" << s.ok << " failed=" << s.failed << " median_error=" << gfomc::fmt17(s.median_error)
              << " median_x_norm/sqrt(n)=" << gfomc::fmt17(s.median_x_norm_scaled) << '\n';
  std::cout << "wrote " << m.out_dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupling experiments for generalized first-order methods"};
  app.require_subcommand(1);

  CommonFlags run_flags, verify_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "Run an experiment and write CSV/JSON artifacts");
  add_common(run, run_flags);

  auto* ver = app.add_subcommand("verify", "Run the reduced-size property suite");
  add_common(ver, verify_flags);
  bool corrupt = false;
  ver->add_flag("--fault-injection", corrupt, "Flip one entry pair of A' after each coupling");

  auto* sweep = app.add_subcommand("sweep", "Run an experiment once per value of one config key");
  add_common(sweep, sweep_flags);
  std::string param;
  std::vector<std::string> values;
  sweep->add_option("--param", param, "Config key to vary")->required();
  sweep->add_option("--values", values, "Values (comma separated)")->required()->delimiter(',');

  auto* presets = app.add_subcommand("presets", "List built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      print_summary(gfomc::run_experiment(resolve(run_flags, run)));
    } else if (*ver) {
      const auto cfg = resolve(verify_flags, ver);
      const std::uint64_t seed = cfg.seed.value_or(20240601);
      const auto report = gfomc::verify(seed, corrupt, cfg.threads);
      for (const auto& c : report.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
      return report.passed() ? 0 : 1;
    } else if (*sweep) {
      const auto base = resolve(sweep_flags, sweep);
      for (const auto& v : values) {
        auto cfg = base;
        gfomc::apply_pairs(cfg, {{param, v}});
        cfg.out = (std::filesystem::path(base.out) / (param + "=" + v)).string();
        std::cout << param << " = " << v << '\n';
        print_summary(gfomc::run_experiment(cfg));
      }
    } else if (*presets) {
      for (const auto& [name, text] : gfomc::builtin_presets()) std::cout << "[" << name << "]\n" << text << '\n';
    }
  } catch (const gfomc::ConfigInvalid& e) {
    for (const auto& [field, msg] : e.fields()) std::cerr << "config error: " << field << ": " << msg << '\n';
    return 2;
  } catch (const gfomc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
