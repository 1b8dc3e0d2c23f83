#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gradpf/diagnostics.hpp"
#include "gradpf/filter.hpp"
#include "gradpf/mcmc.hpp"
#include "gradpf/model.hpp"

namespace gradpf::cli {

struct SweepSpec {
  double lo = 1.0;
  double hi = 4.0;
  int points = 500;
  int component = 0;
  std::vector<std::string> combos = {"ekf+crn", "ekf+multinomial"};
  int replicates = 1;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  ssm::ModelKind model_kind = ssm::ModelKind::Lgss;
  std::optional<ssm::ProposalPolicy> policy;  // model default when unset
  std::optional<Eigen::VectorXd> theta_true;
  double obs_var = 1.0;
  ssm::Lorenz63Options lorenz;
  std::vector<std::string> priors;  // model defaults when empty

  int data_steps = 100;
  std::uint64_t data_seed = 1;
  std::string data_path;

  dpf::FilterConfig filter;
  std::uint64_t filter_seed = 1;

  mcmc::SamplerConfig sampler;
  int chains = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<Eigen::VectorXd> inits;
  bool refresh_bank = false;

  SweepSpec sweep;

  std::string out = "out";
  std::string prices;
  std::string price_column = "close";
  bool write_ancestry = false;

  int max_lag = 100;
  diag::IactMethod iact = diag::IactMethod::Geyer;
  std::vector<std::string> chain_files;

  ssm::Model make_model() const;
  mcmc::Prior make_prior(const ssm::Model& model) const;
};

// YAML with sections model, data, filter, sampler, sweep, io, diagnose.
// Unknown keys are rejected. Relative paths resolve against the config's directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir);

}  // namespace gradpf::cli
