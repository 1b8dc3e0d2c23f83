#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gradpf/config.hpp"
#include "gradpf/io.hpp"

namespace gradpf::cli {

struct RunOptions {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<std::string> out;
};

// Runs fn(0..count-1) on up to `jobs` threads. The first exception (by index)
// is rethrown after all items finish.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

// Observations from data.path, or simulated from model.theta_true.
io::DataSeries load_observations(const ExperimentConfig& cfg, const ssm::Model& model,
                                 std::uint64_t seed);

struct Combo {
  ssm::ProposalPolicy policy;
  dpf::ResamplerKind resampler;
  std::string label;
};
Combo parse_combo(const std::string& text);

struct DiagnosticsStage {
  diag::Report report;
  std::vector<Eigen::MatrixXd> draws;
};

// Shared by `sample` and `diagnose`: report.json, acf.csv and hist.csv.
DiagnosticsStage write_diagnostics(const std::filesystem::path& out_dir,
                                   const std::vector<mcmc::Chain>& chains, int burn_in,
                                   const std::vector<std::string>& names,
                                   const std::optional<Eigen::VectorXd>& truth, int max_lag,
                                   diag::IactMethod method);

// Each returns the process exit code: 0 success, 2 runtime failure with partial artifacts.
int cmd_synth(const ExperimentConfig& cfg, const RunOptions& opts);
int cmd_ingest(const ExperimentConfig& cfg, const RunOptions& opts);
int cmd_filter(const ExperimentConfig& cfg, const RunOptions& opts);
int cmd_sweep(const ExperimentConfig& cfg, const RunOptions& opts);
int cmd_sample(const ExperimentConfig& cfg, const RunOptions& opts);
int cmd_diagnose(const ExperimentConfig& cfg, const RunOptions& opts);

}  // namespace gradpf::cli
