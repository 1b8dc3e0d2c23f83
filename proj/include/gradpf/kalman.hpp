#pragma once

#include <vector>

#include "gradpf/model.hpp"
#include "gradpf/types.hpp"

namespace gradpf::kalman {

struct KfState {
  Vec mean;
  Mat cov;
};

// Exact log p(y_1:T | theta) for a linear-Gaussian model.
double kf_loglik(const ssm::Model& model, const std::vector<Vec>& y, const Vec& theta);

// Gradient of kf_loglik by differentiating the recursion term by term.
Vec kf_loglik_grad(const ssm::Model& model, const std::vector<Vec>& y, const Vec& theta);

struct KfResult {
  double loglik = 0.0;
  Vec grad;
  std::vector<KfState> filtered;
};
KfResult kf_run(const ssm::Model& model, const std::vector<Vec>& y, const Vec& theta);

// Differentiable EKF proposal. `observation` must be evaluated at the prior
// mean transition.a and carry the second derivatives of h. The transition and
// observation covariances are treated as state independent.
ssm::ProposalSpec ekf_proposal(const ssm::TransitionSpec& transition,
                               const ssm::ObservationSpec& observation, const Vec& y);

}  // namespace gradpf::kalman
