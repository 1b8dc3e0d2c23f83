#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gradpf/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based particle MCMC for state-space models"};
  app.require_subcommand(1);

  std::string config_path;
  long long seed = -1;
  int jobs = 1;
  std::string out;

  const std::pair<const char*, const char*> commands[] = {
      {"synth", "simulate a dataset from model.theta_true"},
      {"ingest", "convert a price CSV into 100 x log-returns"},
      {"filter", "run the particle filter once and write filter.json"},
      {"sweep", "likelihood and gradient over a parameter grid"},
      {"sample", "run particle MCMC chains and their diagnostics"},
      {"diagnose", "diagnostics for stored chain CSVs"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment YAML")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the command's base seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const gradpf::cli::ExperimentConfig cfg = gradpf::cli::load_config(config_path);
    gradpf::cli::RunOptions opts;
    if (seed >= 0) opts.seed = static_cast<std::uint64_t>(seed);
    opts.jobs = jobs;
    if (!out.empty()) opts.out = out;
    if (name == "synth") return gradpf::cli::cmd_synth(cfg, opts);
    if (name == "ingest") return gradpf::cli::cmd_ingest(cfg, opts);
    if (name == "filter") return gradpf::cli::cmd_filter(cfg, opts);
    if (name == "sweep") return gradpf::cli::cmd_sweep(cfg, opts);
    if (name == "sample") return gradpf::cli::cmd_sample(cfg, opts);
    return gradpf::cli::cmd_diagnose(cfg, opts);
  } catch (const gradpf::ConfigError& e) {
    std::cerr << "gradpf " << name << ": config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gradpf " << name << ": " << e.what() << "\n";
    return 2;
  }
}
