#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gradpf::diag {

// Biased autocorrelation estimate rho(0..max_lag); rho(0) = 1.
std::vector<double> acf(std::span<const double> series, int max_lag);

enum class IactMethod { Geyer, HardCutoff };
IactMethod parse_iact_method(const std::string& text);

// 1 + 2 * sum_k rho(k). Geyer keeps the initial positive run of paired sums
// up to max_lag; HardCutoff sums every lag up to max_lag.
double iact(std::span<const double> series, int max_lag, IactMethod method = IactMethod::Geyer);

double ess(std::span<const double> series, int max_lag, IactMethod method = IactMethod::Geyer);

// Classic between/within-chain potential scale reduction for one component.
double gelman_rubin(const std::vector<Eigen::MatrixXd>& chains, int component);

// Mean over components of (posterior mean - truth)^2.
double mse(const Eigen::MatrixXd& samples, const Eigen::VectorXd& truth);

struct ComponentSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double iact = 0.0;
  double ess = 0.0;
  double rhat = 0.0;  // NaN with a single chain
};

struct Report {
  std::vector<ComponentSummary> components;
  int chains = 0;
  int draws_per_chain = 0;
  double mse = 0.0;  // NaN when no truth is known
  double acceptance = 0.0;
};

// Per-component summary of post-burn-in draws. IACT and ESS are averaged over
// chains; ESS is the sum over chains.
Report summarize(const std::vector<Eigen::MatrixXd>& chains, const std::vector<std::string>& names,
                 int max_lag, IactMethod method);

}  // namespace gradpf::diag
