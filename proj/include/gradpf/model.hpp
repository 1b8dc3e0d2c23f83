#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gradpf/types.hpp"

namespace gradpf::ssm {

enum class ModelKind { RandomWalk, Lgss, StochasticVolatility, Lorenz63 };
enum class ProposalPolicy { Prior, Optimal, Ekf };
enum class Constraint { Unconstrained, Positive };

// How the incremental weight log sigma is formed for a model/proposal pair.
enum class WeightKind {
  LikelihoodAtNewState,  // prior proposal: log p(y_t | x_t)
  Predictive,            // exact optimal proposal: log p(y_t | x_{t-1})
  FullRatio,             // log p(y|x_t) + log p(x_t|x_{t-1}) - log q(x_t|x_{t-1}, y)
};

std::string_view to_string(ModelKind kind);
std::string_view to_string(ProposalPolicy policy);
ModelKind parse_model_kind(std::string_view text);
ProposalPolicy parse_proposal_policy(std::string_view text);

// p(x_t | x_{t-1}) = N(a, Sigma).
struct TransitionSpec {
  Vec a;
  Mat sigma;
  Mat da_dx;       // n_x x n_x
  Mat da_dtheta;   // n_x x n_theta
  Slices dsigma_dtheta;
  Slices dsigma_dx;
  bool sigma_depends_on_x = false;
};

// p(y_t | x_t) = N(h, R). Second derivatives are only consumed by the EKF proposal.
struct ObservationSpec {
  Vec h;
  Mat r;
  Mat dh_dx;       // n_y x n_x
  Mat dh_dtheta;   // n_y x n_theta
  Slices dr_dtheta;
  Slices dr_dx;
  bool r_depends_on_x = false;
  Slices d2h_dx2;       // entry i: n_x x n_x Hessian of h_i
  Slices d2h_dxdtheta;  // entry i: n_x x n_theta
};

// q(x_t | x_{t-1}, y_t) = N(mu, C).
struct ProposalSpec {
  Vec mu;
  Mat c;
  Mat dmu_dx;
  Mat dmu_dtheta;
  Slices dc_dx;
  Slices dc_dtheta;
  bool c_depends_on_x = false;
};

// Density of y_t given x_{t-1} used by the predictive weight: N(y; m, S).
struct PredictiveSpec {
  Vec mean;
  Mat cov;
  Mat dmean_dx;
  Mat dmean_dtheta;
  Slices dcov_dtheta;
};

// Reparameterised draw of the initial state x_0 = g(theta, eps).
struct InitialState {
  Vec x;
  Mat dx_dtheta;
};

// N(mean, cov) for a random initial state x_0, with theta partials.
struct InitialDensity {
  Vec mean;
  Mat cov;
  Mat dmean_dtheta;
  Slices dcov_dtheta;
};

// x_t = F x_{t-1} + b + N(0, Q),  y_t = H x_t + c + N(0, R),  x_0 ~ N(m0, P0).
struct LinearGaussianForm {
  Mat f, q, h, r, p0;
  Vec b, c, m0;
  Slices df, dq, dh, dr, dp0;
  std::array<Vec, kMaxDim> db, dc, dm0;
};

struct Lorenz63Options {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  double dt = 0.05;
  int substeps = 50;
  int observed = 2;
  bool estimate_obs_noise = false;
  double obs_noise = 1.2;  // sigma_R when it is not a parameter
  Vec x0 = Vec::Ones(3);
};

// One-dimensional Gaussian conditional N(m, v) with first derivatives, the
// allocation-free form of the specs above for models with n_x = n_y = 1.
// For observations the second derivatives of m feed the EKF proposal.
struct ScalarDensity {
  double m = 0.0;
  double v = 0.0;
  double dm_dx = 0.0;
  double dv_dx = 0.0;
  double d2m_dx2 = 0.0;
  std::array<double, kMaxDim> dm_dtheta{};
  std::array<double, kMaxDim> dv_dtheta{};
  std::array<double, kMaxDim> d2m_dxdtheta{};
  bool v_depends_on_x = false;
};

struct Simulation {
  std::vector<Vec> states;        // x_1..x_T
  std::vector<Vec> observations;  // y_1..y_T
};

class Model {
 public:
  static Model random_walk(double obs_var = 1.0, ProposalPolicy policy = ProposalPolicy::Ekf);
  static Model lgss(ProposalPolicy policy = ProposalPolicy::Optimal);
  static Model stochastic_volatility(ProposalPolicy policy = ProposalPolicy::Prior);
  static Model lorenz63(const Lorenz63Options& options = {},
                        ProposalPolicy policy = ProposalPolicy::Prior);

  ModelKind kind() const { return kind_; }
  ProposalPolicy policy() const { return policy_; }
  int state_dim() const { return nx_; }
  int obs_dim() const { return ny_; }
  int param_dim() const { return ntheta_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const std::vector<std::string>& param_names() const { return names_; }
  const Lorenz63Options& lorenz_options() const { return lorenz_; }
  double obs_var() const { return obs_var_; }

  // Copy of this model using a different proposal policy.
  Model with_policy(ProposalPolicy policy) const;

  TransitionSpec transition(const Vec& x, const Vec& theta) const;
  ObservationSpec observation(const Vec& x, const Vec& theta) const;
  ProposalSpec proposal(const Vec& x, const Vec& theta, const Vec& y) const;
  PredictiveSpec predictive(const Vec& x, const Vec& theta) const;
  WeightKind incremental_weight_kind() const;

  // Scalar counterparts of the four density functions; only for is_scalar() models.
  bool is_scalar() const { return nx_ == 1 && ny_ == 1; }
  ScalarDensity scalar_transition(double x, const Vec& theta) const;
  ScalarDensity scalar_observation(double x, const Vec& theta) const;
  ScalarDensity scalar_proposal(double x, const Vec& theta, double y) const;
  ScalarDensity scalar_predictive(double x, const Vec& theta) const;

  bool initial_is_random() const { return kind_ == ModelKind::StochasticVolatility; }
  InitialState initial(const Vec& theta, const Vec& eps) const;
  InitialDensity initial_density(const Vec& theta) const;

  bool is_linear_gaussian() const {
    return kind_ == ModelKind::RandomWalk || kind_ == ModelKind::Lgss;
  }
  LinearGaussianForm linear_form(const Vec& theta) const;

  Simulation generate(const Vec& theta, int steps, std::uint64_t seed) const;

  void check_theta(const Vec& theta) const;

 private:
  Model() = default;
  ModelKind kind_ = ModelKind::RandomWalk;
  ProposalPolicy policy_ = ProposalPolicy::Prior;
  int nx_ = 1, ny_ = 1, ntheta_ = 1;
  std::vector<Constraint> constraints_;
  std::vector<std::string> names_;
  double obs_var_ = 1.0;
  Lorenz63Options lorenz_;

  TransitionSpec lorenz_transition(const Vec& x, const Vec& theta) const;
};

// Lorenz-63 flow integrated with RK4 over one assimilation interval, plus the
// Jacobian of the full discrete map.
struct FlowStep {
  Vec x;
  Mat jacobian;
};
FlowStep lorenz_flow(const Vec& x, const Lorenz63Options& options, int substeps, double dt);

}  // namespace gradpf::ssm
