#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gradpf/filter.hpp"
#include "gradpf/model.hpp"

namespace gradpf::mcmc {

using Eigen::VectorXd;

struct PriorComponent {
  enum class Kind { Normal, Gamma };
  Kind kind = Kind::Normal;
  double a = 0.0;  // mean, or shape
  double b = 1.0;  // sd, or rate

  static PriorComponent normal(double mean, double sd);
  static PriorComponent gamma(double shape, double rate);

  double log_density(double v) const;
  double dlog_density(double v) const;
  double draw(std::mt19937_64& rng) const;
  std::string describe() const;
};

// Parses "normal(m,s)" or "gamma(shape,rate)".
PriorComponent parse_prior(std::string_view text);

struct Prior {
  std::vector<PriorComponent> components;

  static Prior defaults(const ssm::Model& model);
  double log_density(const VectorXd& theta) const;
};

// Positive components are sampled as eta = log(theta).
VectorXd to_constrained(const std::vector<ssm::Constraint>& c, const VectorXd& eta);
VectorXd to_unconstrained(const std::vector<ssm::Constraint>& c, const VectorXd& theta);

struct PosteriorEval {
  double logpost = -std::numeric_limits<double>::infinity();
  VectorXd grad;  // unconstrained space
  double loglik = std::numeric_limits<double>::quiet_NaN();
  bool failed = true;
  std::string failure;
};

using Target = std::function<PosteriorEval(const VectorXd&)>;

// Log-posterior in unconstrained space with a particle-filter likelihood. The
// noise bank is fixed, so the value is a deterministic function of eta.
class FilterPosterior {
 public:
  FilterPosterior(ssm::Model model, std::vector<Vec> y, Prior prior, dpf::FilterConfig config,
                  dpf::NoiseBank bank);

  PosteriorEval operator()(const VectorXd& eta) const;

  const ssm::Model& model() const { return model_; }
  const Prior& prior() const { return prior_; }
  void set_bank(const dpf::NoiseBank& bank) { bank_ = bank; }
  const dpf::NoiseBank& bank() const { return bank_; }

 private:
  ssm::Model model_;
  std::vector<Vec> y_;
  Prior prior_;
  dpf::FilterConfig config_;
  dpf::NoiseBank bank_;
};

enum class KernelKind { Mala, Hmc, Rhmc, Nuts };
std::string_view to_string(KernelKind kind);
KernelKind parse_kernel(std::string_view text);

struct SamplerConfig {
  KernelKind kernel = KernelKind::Nuts;
  double epsilon = 0.0;  // 0 selects find_reasonable_epsilon
  int leapfrog_steps = 1;
  double mean_leapfrog_steps = 2.5;
  double gamma = 0.0;  // MALA scale; 0 selects a tuning pre-run
  int max_tree_depth = 10;
  double delta_max = 1000.0;
  int iterations = 1000;
  int burn_in = 0;

  void validate() const;
};

struct ChainState {
  VectorXd eta;
  PosteriorEval eval;
};

struct StepResult {
  ChainState state;
  bool accepted = false;
  bool moved = false;
  int nge = 0;
};

struct LeapfrogResult {
  VectorXd eta;
  VectorXd momentum;
  PosteriorEval eval;
};

LeapfrogResult leapfrog(const Target& target, const VectorXd& eta, const VectorXd& momentum,
                        const PosteriorEval& eval, double epsilon);

double find_reasonable_epsilon(const Target& target, const ChainState& state, std::mt19937_64& rng);

StepResult mala_step(const Target& target, const ChainState& state, double gamma,
                     std::mt19937_64& rng);
StepResult hmc_step(const Target& target, const ChainState& state, double epsilon, int steps,
                    std::mt19937_64& rng);
StepResult rhmc_step(const Target& target, const ChainState& state, double epsilon,
                     double mean_steps, std::mt19937_64& rng);
StepResult nuts_step(const Target& target, const ChainState& state, double epsilon,
                     int max_tree_depth, double delta_max, std::mt19937_64& rng);

// Leapfrog count of RHMC for one exponential draw.
int rhmc_steps_from_draw(double exponential_draw);

// Grid pre-run choosing the MALA scale whose acceptance is closest to `target_rate`.
double tune_mala_gamma(const Target& target, const ChainState& state, std::mt19937_64& rng,
                       double target_rate = 0.3, int trial_iterations = 25);

struct ChainRow {
  int iter = 0;
  bool accepted = false;
  double logpost = 0.0;
  int nge = 0;
  VectorXd theta;  // constrained space
};

struct Chain {
  std::vector<ChainRow> rows;  // row 0 is the initial state
  double epsilon = 0.0;        // step size, or gamma for MALA
  double wall_seconds = 0.0;
  int failures = 0;  // proposals whose posterior evaluation failed

  double acceptance_rate() const;
  long total_nge() const;
  // Draws after dropping the initial row and `burn_in` iterations.
  Eigen::MatrixXd samples(int burn_in) const;
};

struct ChainOptions {
  std::vector<ssm::Constraint> constraints;
  // Called before each iteration (1-based), e.g. to refresh the noise bank.
  std::function<void(int)> before_iteration;
};

Chain run_chain(const Target& target, const VectorXd& eta0, const SamplerConfig& config,
                std::uint64_t seed, const ChainOptions& options);

// Prior draws until the posterior is finite (at most 100 attempts).
VectorXd draw_initial(const Target& target, const Prior& prior,
                      const std::vector<ssm::Constraint>& constraints, std::mt19937_64& rng);

}  // namespace gradpf::mcmc
