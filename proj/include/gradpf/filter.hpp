#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gradpf/model.hpp"
#include "gradpf/noise_bank.hpp"
#include "gradpf/types.hpp"

namespace gradpf::dpf {

struct Particle {
  Vec x;
  Mat dx_dtheta;  // n_x x n_theta
  double logw = 0.0;
  Vec dlogw_dtheta;
};

enum class ResamplerKind { None, Crn, Multinomial, Soft, Gumbel };
enum class GradientEstimator { Reparam, Fisher };

std::string_view to_string(ResamplerKind kind);
ResamplerKind parse_resampler(std::string_view text);
GradientEstimator parse_gradient_estimator(std::string_view text);

struct Resampler {
  ResamplerKind kind = ResamplerKind::Crn;
  double alpha = 0.5;   // soft resampling mixture weight
  double lambda = 0.5;  // Gumbel-softmax temperature
};

struct FilterConfig {
  int particles = 100;
  Resampler resampler;
  GradientEstimator gradient = GradientEstimator::Reparam;
  double ess_threshold = 0.5;  // resample when ESS < threshold * N

  void validate() const;
};

struct StepTrace {
  double ess = 0.0;
  bool resampled = false;
  std::vector<int> ancestry;  // parent of each particle (identity when not resampled)
};

struct FilterOutput {
  double loglik = 0.0;
  Vec dloglik_dtheta;
  std::vector<StepTrace> trace;

  // Hash of resampling times and parent indices; equal hashes identify a
  // shared family tree between two filter runs.
  std::uint64_t ancestry_signature() const;
};

// x' = mu + sqrt(C) eps with its total derivative dx'/dtheta.
Particle propagate(const Particle& particle, const ssm::ProposalSpec& proposal, const Vec& eps);

struct IncrementalWeight {
  double log_sigma = 0.0;
  Vec dlog_sigma;  // total derivative wrt theta
};

// log sigma for the model's weight kind and its total theta-derivative. Specs
// must be evaluated at the right arguments: transition and proposal at the
// previous state, observation at the new state.
IncrementalWeight incremental_logw_and_grad(const ssm::Model& model, const Vec& theta,
                                            const Particle& prev, const Particle& next,
                                            const ssm::ProposalSpec& proposal,
                                            const ssm::TransitionSpec& transition,
                                            const ssm::ObservationSpec& observation,
                                            const Vec& y);

double ess(std::span<const double> logw);

struct ResampleResult {
  std::vector<Particle> particles;
  std::vector<int> ancestry;
};

// Multinomial resampling driven by fixed uniforms in (0, 1].
ResampleResult resample_crn(std::span<const Particle> particles, std::span<const double> u);
ResampleResult resample_soft(std::span<const Particle> particles, std::span<const double> u,
                             double alpha);
// `gumbels` is N x N: row i holds the Gumbel(0,1) draws for offspring i.
ResampleResult resample_gumbel(std::span<const Particle> particles, const Eigen::MatrixXd& gumbels,
                               double lambda);

FilterOutput run_filter(const ssm::Model& model, const Vec& theta, const std::vector<Vec>& y,
                        const FilterConfig& config, const NoiseBank& bank);

// run_filter without the scalar fast path used for n_x = n_y = 1 models.
FilterOutput run_filter_general(const ssm::Model& model, const Vec& theta,
                                const std::vector<Vec>& y, const FilterConfig& config,
                                const NoiseBank& bank);

// Gradient estimate from Fisher's identity with trajectory-wise score
// accumulators copied from parents at resampling.
Vec fisher_gradient(const ssm::Model& model, const Vec& theta, const std::vector<Vec>& y,
                    const FilterConfig& config, const NoiseBank& bank);

}  // namespace gradpf::dpf
