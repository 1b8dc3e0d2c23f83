#include "gradpf/diagnostics.hpp"

#include <cmath>
#include <limits>

#include "gradpf/types.hpp"

namespace gradpf::diag {

std::vector<double> acf(std::span<const double> series, int max_lag) {
  const int n = static_cast<int>(series.size());
  if (max_lag < 0 || n <= max_lag) throw DimensionError("acf: series must be longer than max_lag");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  std::vector<double> c(n);
  for (int i = 0; i < n; ++i) c[i] = series[i] - mean;
  double c0 = 0.0;
  for (double v : c) c0 += v * v;
  if (!(c0 > 0.0)) throw DomainError("acf: constant series");
  std::vector<double> rho(max_lag + 1);
  for (int k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (int i = 0; i + k < n; ++i) s += c[i] * c[i + k];
    rho[k] = s / c0;
  }
  return rho;
}

IactMethod parse_iact_method(const std::string& text) {
  if (text == "geyer") return IactMethod::Geyer;
  if (text == "cutoff") return IactMethod::HardCutoff;
  throw ConfigError("unknown IACT method '" + text + "'");
}

double iact(std::span<const double> series, int max_lag, IactMethod method) {
  const std::vector<double> rho = acf(series, max_lag);
  if (method == IactMethod::HardCutoff) {
    double s = 1.0;
    for (int k = 1; k <= max_lag; ++k) s += 2.0 * rho[k];
    return s;
  }
  // Pairs Gamma_m = rho(2m) + rho(2m+1) while positive.
  double s = -1.0;
  for (int m = 0; 2 * m + 1 <= max_lag; ++m) {
    const double pair = rho[2 * m] + rho[2 * m + 1];
    if (!(pair > 0.0)) break;
    s += 2.0 * pair;
  }
  return std::max(s, 1.0 / static_cast<double>(series.size()));
}

double ess(std::span<const double> series, int max_lag, IactMethod method) {
  return static_cast<double>(series.size()) / iact(series, max_lag, method);
}

double gelman_rubin(const std::vector<Eigen::MatrixXd>& chains, int component) {
  const int m = static_cast<int>(chains.size());
  if (m < 2) throw DimensionError("gelman_rubin: need at least two chains");
  const Eigen::Index n = chains.front().rows();
  if (n < 10) throw DimensionError("gelman_rubin: chains need at least 10 draws");
  Eigen::VectorXd means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    if (chains[c].rows() != n) throw DimensionError("gelman_rubin: chains differ in length");
    const Eigen::VectorXd x = chains[c].col(component);
    means(c) = x.mean();
    vars(c) = (x.array() - means(c)).square().sum() / static_cast<double>(n - 1);
  }
  const double w = vars.mean();
  if (!(w > 0.0)) throw DomainError("gelman_rubin: zero within-chain variance");
  const double grand = means.mean();
  const double b = static_cast<double>(n) * (means.array() - grand).square().sum() / (m - 1);
  const double nd = static_cast<double>(n);
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  return std::sqrt(var_plus / w);
}

double mse(const Eigen::MatrixXd& samples, const Eigen::VectorXd& truth) {
  if (samples.rows() == 0) throw DimensionError("mse: no samples");
  if (samples.cols() != truth.size()) throw DimensionError("mse: truth dimension");
  const Eigen::VectorXd mean = samples.colwise().mean().transpose();
  return (mean - truth).squaredNorm() / static_cast<double>(truth.size());
}

Report summarize(const std::vector<Eigen::MatrixXd>& chains, const std::vector<std::string>& names,
                 int max_lag, IactMethod method) {
  if (chains.empty()) throw DimensionError("summarize: no chains");
  const Eigen::Index dim = chains.front().cols();
  const Eigen::Index n = chains.front().rows();
  if (n < 2) throw DimensionError("summarize: need at least two post-burn-in draws");
  for (const auto& c : chains) {
    if (c.cols() != dim || c.rows() != n) throw DimensionError("summarize: chain shapes differ");
  }
  const int lag = std::min<int>(max_lag, static_cast<int>(n) - 1);
  Report r;
  r.chains = static_cast<int>(chains.size());
  r.draws_per_chain = static_cast<int>(n);
  r.mse = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < dim; ++j) {
    ComponentSummary s;
    s.name = j < static_cast<Eigen::Index>(names.size()) ? names[j] : "theta_" + std::to_string(j + 1);
    Eigen::VectorXd all(n * r.chains);
    for (int c = 0; c < r.chains; ++c) all.segment(c * n, n) = chains[c].col(j);
    s.mean = all.mean();
    s.sd = std::sqrt((all.array() - s.mean).square().sum() / static_cast<double>(all.size() - 1));
    double iact_sum = 0.0, ess_sum = 0.0;
    for (const auto& c : chains) {
      const Eigen::VectorXd x = c.col(j);
      const std::span<const double> sp(x.data(), static_cast<std::size_t>(x.size()));
      double t = std::numeric_limits<double>::infinity();
      try {
        t = iact(sp, lag, method);
      } catch (const DomainError&) {
        // A chain that never moved carries no independent information.
      }
      iact_sum += t;
      ess_sum += static_cast<double>(n) / t;
    }
    s.iact = iact_sum / r.chains;
    s.ess = ess_sum;
    s.rhat = std::numeric_limits<double>::quiet_NaN();
    if (r.chains >= 2 && n >= 10) {
      try {
        s.rhat = gelman_rubin(chains, static_cast<int>(j));
      } catch (const DomainError&) {
      }
    }
    r.components.push_back(s);
  }
  return r;
}

}  // namespace gradpf::diag
