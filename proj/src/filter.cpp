#include "gradpf/filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "gradpf/gaussian.hpp"

namespace gradpf::dpf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Max-shifted normalisation of log-weights.
struct Normalised {
  std::vector<double> w;  // normalised weights
  double log_total = kNegInf;
};

Normalised normalise(std::span<const Particle> particles) {
  Normalised out;
  const std::size_t n = particles.size();
  out.w.resize(n);
  double m = kNegInf;
  for (const Particle& p : particles) m = std::max(m, p.logw);
  if (m == kNegInf || !std::isfinite(m)) throw DomainError("all log-weights are -inf");
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out.w[j] = std::exp(particles[j].logw - m);
    total += out.w[j];
  }
  for (double& v : out.w) v /= total;
  out.log_total = m + std::log(total);
  return out;
}

Vec weighted_gradient(std::span<const Particle> particles, const std::vector<double>& w) {
  Vec g = Vec::Zero(particles.front().dlogw_dtheta.size());
  for (std::size_t j = 0; j < particles.size(); ++j) {
    if (w[j] > 0.0) g += w[j] * particles[j].dlogw_dtheta;
  }
  return g;
}

// Index of the first cumulative weight >= u, i.e. #{j : u > c_j}.
std::vector<int> draw_indices(const std::vector<double>& probs, std::span<const double> u) {
  const std::size_t n = probs.size();
  std::vector<double> c(n);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    acc += probs[j];
    c[j] = acc;
  }
  for (std::size_t j = n; j-- > 0;) {
    if (probs[j] > 0.0) {
      // Pin the last positive-mass entry to 1 so u = 1 always lands.
      for (std::size_t k = j; k < n; ++k) c[k] = 1.0;
      break;
    }
  }
  std::vector<int> kappa(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0 && u[i] <= 1.0)) {
      throw DomainError("resampling uniform " + std::to_string(u[i]) + " outside (0, 1]");
    }
    kappa[i] = static_cast<int>(std::lower_bound(c.begin(), c.end(), u[i]) - c.begin());
  }
  return kappa;
}

bool is_zero(const Mat& m) { return m.size() == 0 || m.isZero(0.0); }

// Partial theta-score of log N(z; mean, cov) with z held fixed.
Vec explicit_score(const gauss::LogNormalGrad& g, const Mat& dmean_dtheta, const Slices& dcov,
                   int ntheta) {
  Vec s(ntheta);
  for (int j = 0; j < ntheta; ++j) {
    s(j) = g.dmu.dot(dmean_dtheta.col(j)) + contract(g.dcov, dcov[j]);
  }
  return s;
}

ssm::ProposalSpec as_proposal(const ssm::TransitionSpec& t) {
  ssm::ProposalSpec p;
  p.mu = t.a;
  p.c = t.sigma;
  p.dmu_dx = t.da_dx;
  p.dmu_dtheta = t.da_dtheta;
  p.dc_dx = t.dsigma_dx;
  p.dc_dtheta = t.dsigma_dtheta;
  p.c_depends_on_x = t.sigma_depends_on_x;
  return p;
}

std::uint64_t theta_key(const Vec& theta) {
  const std::string_view bytes(reinterpret_cast<const char*>(theta.data()),
                               sizeof(double) * static_cast<std::size_t>(theta.size()));
  return std::hash<std::string_view>{}(bytes);
}

struct LogNormal1 {
  double value, dx, dmu, dcov;
};

// The n = 1 branch of gauss::log_normal_eval, kept bit-for-bit identical.
LogNormal1 log_normal1(double x, double mu, double c, const char* cov_name) {
  if (!(c > 0.0) || !std::isfinite(c)) throw FactorizationError(cov_name, "not positive definite");
  const double d = x - mu;
  const double r = d / c;
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  return {-0.5 * d * r - 0.5 * (kLog2Pi + std::log(c)), -r, r, -0.5 * (1.0 / c - r * r)};
}

// One particle move and weight update for a model with n_x = n_y = 1. Same
// arithmetic as propagate + incremental_logw_and_grad on the general specs.
void scalar_step(const ssm::Model& model, ssm::WeightKind kind, const Vec& theta, int t,
                 double y, double eps, const Particle& prev, Particle& p) {
  const int nth = static_cast<int>(theta.size());
  const bool prior = model.policy() == ssm::ProposalPolicy::Prior;
  const bool full = kind == ssm::WeightKind::FullRatio;
  const double xp = prev.x(0);
  ssm::ScalarDensity trans;
  if (prior || full) trans = model.scalar_transition(xp, theta);
  const ssm::ScalarDensity prop = prior ? trans : model.scalar_proposal(xp, theta, y);
  if (!(prop.v > 0.0) || !std::isfinite(prop.v)) {
    throw FactorizationError("proposal covariance", "not positive definite");
  }
  const double root = std::sqrt(prop.v);
  const double x = prop.m + root * eps;
  if (!std::isfinite(x)) throw DivergenceError(t, "non-finite particle state");
  p.x.resize(1);
  p.x(0) = x;
  p.dx_dtheta.resize(1, nth);
  p.dlogw_dtheta.resize(nth);
  double df_dx = prop.dm_dx;
  if (prop.v_depends_on_x && prop.dv_dx != 0.0) df_dx += prop.dv_dx / (2.0 * root) * eps;
  for (int j = 0; j < nth; ++j) {
    double df = prop.dm_dtheta[j];
    if (prop.dv_dtheta[j] != 0.0) df += prop.dv_dtheta[j] / (2.0 * root) * eps;
    p.dx_dtheta(0, j) = df_dx * prev.dx_dtheta(0, j) + df;
  }

  std::array<double, kMaxDim> g{};
  double log_sigma = 0.0;
  auto add_likelihood = [&]() {
    const ssm::ScalarDensity ob = model.scalar_observation(x, theta);
    const LogNormal1 e = log_normal1(y, ob.m, ob.v, "observation covariance");
    log_sigma += e.value;
    for (int j = 0; j < nth; ++j) {
      const double dh = ob.dm_dx * p.dx_dtheta(0, j) + ob.dm_dtheta[j];
      double d = e.dmu * dh + e.dcov * ob.dv_dtheta[j];
      if (ob.v_depends_on_x) d += e.dcov * ob.dv_dx * p.dx_dtheta(0, j);
      g[j] += d;
    }
  };
  auto add_state_density = [&](double sign, const ssm::ScalarDensity& sd, const char* name) {
    const LogNormal1 e = log_normal1(x, sd.m, sd.v, name);
    log_sigma += sign * e.value;
    for (int j = 0; j < nth; ++j) {
      const double dm = sd.dm_dx * prev.dx_dtheta(0, j) + sd.dm_dtheta[j];
      double d = e.dx * p.dx_dtheta(0, j) + e.dmu * dm + e.dcov * sd.dv_dtheta[j];
      if (sd.v_depends_on_x) d += e.dcov * sd.dv_dx * prev.dx_dtheta(0, j);
      g[j] += sign * d;
    }
  };
  switch (kind) {
    case ssm::WeightKind::LikelihoodAtNewState:
      add_likelihood();
      break;
    case ssm::WeightKind::Predictive: {
      const ssm::ScalarDensity pr = model.scalar_predictive(xp, theta);
      const LogNormal1 e = log_normal1(y, pr.m, pr.v, "predictive covariance");
      log_sigma = e.value;
      for (int j = 0; j < nth; ++j) {
        const double dm = pr.dm_dx * prev.dx_dtheta(0, j) + pr.dm_dtheta[j];
        g[j] = e.dmu * dm + e.dcov * pr.dv_dtheta[j];
      }
      break;
    }
    case ssm::WeightKind::FullRatio:
      add_likelihood();
      add_state_density(1.0, trans, "transition covariance");
      add_state_density(-1.0, prop, "proposal covariance");
      break;
  }
  p.logw = prev.logw + log_sigma;
  bool finite = std::isfinite(p.logw);
  for (int j = 0; j < nth; ++j) {
    p.dlogw_dtheta(j) = prev.dlogw_dtheta(j) + g[j];
    finite = finite && std::isfinite(p.dlogw_dtheta(j));
  }
  if (!finite) {
    p.logw = kNegInf;
    p.dlogw_dtheta.setZero();
  }
}

struct EngineResult {
  FilterOutput out;
  Vec fisher;
};

EngineResult run_engine(const ssm::Model& model, const Vec& theta, const std::vector<Vec>& y,
                        const FilterConfig& config, const NoiseBank& bank, bool track_fisher,
                        bool allow_scalar) {
  config.validate();
  model.check_theta(theta);
  const int steps = static_cast<int>(y.size());
  const int n = config.particles;
  const int nx = model.state_dim();
  const int nth = model.param_dim();
  if (steps < 1) throw DimensionError("run_filter: no observations");
  for (const Vec& yt : y) {
    if (yt.size() != model.obs_dim()) throw DimensionError("run_filter: observation dimension");
  }
  if (bank.particles() != n || bank.steps() < steps || bank.state_dim() != nx) {
    throw DimensionError("run_filter: noise bank shape does not match (T, N, n_x)");
  }
  if (track_fisher && config.resampler.kind == ResamplerKind::Gumbel) {
    throw ConfigError("the Fisher estimator cannot be combined with Gumbel-softmax resampling");
  }

  const ssm::WeightKind kind = model.incremental_weight_kind();
  const bool prior_policy = model.policy() == ssm::ProposalPolicy::Prior;
  const bool need_transition = prior_policy || track_fisher || kind == ssm::WeightKind::FullRatio;
  const bool scalar = allow_scalar && !track_fisher && model.is_scalar();

  std::vector<Particle> particles(n);
  std::vector<Vec> alpha;
  if (track_fisher) alpha.assign(n, Vec::Zero(nth));
  std::optional<ssm::InitialDensity> init_density;
  if (track_fisher && model.initial_is_random()) init_density = model.initial_density(theta);
  for (int i = 0; i < n; ++i) {
    const ssm::InitialState s = model.initial(theta, bank.proposal_noise(0, i));
    particles[i].x = s.x;
    particles[i].dx_dtheta = s.dx_dtheta;
    particles[i].logw = 0.0;
    particles[i].dlogw_dtheta = Vec::Zero(nth);
    if (init_density) {
      const gauss::LogNormalGrad g = gauss::dlog_normal(s.x, init_density->mean, init_density->cov,
                                                        "initial covariance");
      alpha[i] = explicit_score(g, init_density->dmean_dtheta, init_density->dcov_dtheta, nth);
    }
  }

  EngineResult result;
  result.out.trace.reserve(steps);
  std::vector<Particle> next(n);
  std::vector<double> logw(n);
  const std::uint64_t key = theta_key(theta);

  for (int t = 1; t <= steps; ++t) {
    const Vec& yt = y[t - 1];
    for (int i = 0; i < n; ++i) {
      const Particle& prev = particles[i];
      try {
        if (scalar) {
          scalar_step(model, kind, theta, t, yt(0), bank.normal(t, i, 0), prev, next[i]);
          continue;
        }
        ssm::TransitionSpec trans;
        ssm::ProposalSpec prop;
        if (need_transition) trans = model.transition(prev.x, theta);
        prop = prior_policy ? as_proposal(trans) : model.proposal(prev.x, theta, yt);
        Particle p = propagate(prev, prop, bank.proposal_noise(t, i));
        if (!p.x.allFinite()) throw DivergenceError(t, "non-finite particle state");
        const ssm::ObservationSpec obs = model.observation(p.x, theta);
        const IncrementalWeight iw =
            incremental_logw_and_grad(model, theta, prev, p, prop, trans, obs, yt);
        p.logw = prev.logw + iw.log_sigma;
        p.dlogw_dtheta = prev.dlogw_dtheta + iw.dlog_sigma;
        if (!std::isfinite(p.logw) || !p.dlogw_dtheta.allFinite()) {
          p.logw = kNegInf;
          p.dlogw_dtheta.setZero();
        }
        if (track_fisher) {
          const gauss::LogNormalGrad gp =
              gauss::dlog_normal(p.x, trans.a, trans.sigma, "transition covariance");
          const gauss::LogNormalGrad gl = gauss::dlog_normal(yt, obs.h, obs.r, "observation covariance");
          alpha[i] += explicit_score(gp, trans.da_dtheta, trans.dsigma_dtheta, nth) +
                      explicit_score(gl, obs.dh_dtheta, obs.dr_dtheta, nth);
        }
        next[i] = std::move(p);
      } catch (const DivergenceError& e) {
        if (e.time_index() >= 0) throw;
        throw DivergenceError(t, e.what());
      }
    }
    std::swap(particles, next);

    for (int i = 0; i < n; ++i) logw[i] = particles[i].logw;
    if (std::all_of(logw.begin(), logw.end(), [](double v) { return v == kNegInf; })) {
      throw WeightUnderflowError(t);
    }
    StepTrace st;
    st.ess = ess(logw);
    const bool want = t < steps && config.resampler.kind != ResamplerKind::None &&
                      st.ess < config.ess_threshold * n;
    if (want) {
      ResampleResult r;
      std::vector<double> u(n);
      switch (config.resampler.kind) {
        case ResamplerKind::Crn:
          for (int i = 0; i < n; ++i) u[i] = bank.resample_uniform(t, i);
          r = resample_crn(particles, u);
          break;
        case ResamplerKind::Multinomial:
          for (int i = 0; i < n; ++i) u[i] = bank.keyed_uniform(key, t, i);
          r = resample_crn(particles, u);
          break;
        case ResamplerKind::Soft:
          for (int i = 0; i < n; ++i) u[i] = bank.resample_uniform(t, i);
          r = resample_soft(particles, u, config.resampler.alpha);
          break;
        case ResamplerKind::Gumbel: {
          Eigen::MatrixXd g(n, n);
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) g(i, j) = bank.gumbel(t, i, j);
          }
          r = resample_gumbel(particles, g, config.resampler.lambda);
          break;
        }
        case ResamplerKind::None:
          break;
      }
      particles = std::move(r.particles);
      if (track_fisher) {
        std::vector<Vec> copied(n);
        for (int i = 0; i < n; ++i) copied[i] = alpha[r.ancestry[i]];
        alpha = std::move(copied);
      }
      st.resampled = true;
      st.ancestry = std::move(r.ancestry);
    } else {
      st.ancestry.resize(n);
      for (int i = 0; i < n; ++i) st.ancestry[i] = i;
    }
    result.out.trace.push_back(std::move(st));
  }

  const Normalised nw = normalise(particles);
  result.out.loglik = nw.log_total - std::log(static_cast<double>(n));
  result.out.dloglik_dtheta = weighted_gradient(particles, nw.w);
  if (track_fisher) {
    result.fisher = Vec::Zero(nth);
    for (int i = 0; i < n; ++i) {
      if (nw.w[i] > 0.0) result.fisher += nw.w[i] * alpha[i];
    }
  }
  return result;
}

}  // namespace

std::string_view to_string(ResamplerKind kind) {
  switch (kind) {
    case ResamplerKind::None: return "none";
    case ResamplerKind::Crn: return "crn";
    case ResamplerKind::Multinomial: return "multinomial";
    case ResamplerKind::Soft: return "soft";
    case ResamplerKind::Gumbel: return "gumbel";
  }
  return "unknown";
}

ResamplerKind parse_resampler(std::string_view text) {
  if (text == "none") return ResamplerKind::None;
  if (text == "crn") return ResamplerKind::Crn;
  if (text == "multinomial") return ResamplerKind::Multinomial;
  if (text == "soft") return ResamplerKind::Soft;
  if (text == "gumbel") return ResamplerKind::Gumbel;
  throw ConfigError("unknown resampler '" + std::string(text) + "'");
}

GradientEstimator parse_gradient_estimator(std::string_view text) {
  if (text == "reparam") return GradientEstimator::Reparam;
  if (text == "fisher") return GradientEstimator::Fisher;
  throw ConfigError("unknown gradient estimator '" + std::string(text) + "'");
}

void FilterConfig::validate() const {
  if (particles < 1) throw ConfigError("filter: particle count must be positive");
  if (!(ess_threshold > 0.0 && ess_threshold <= 1.0)) {
    throw ConfigError("filter: ess_threshold must lie in (0, 1]");
  }
  if (!(resampler.alpha >= 0.0 && resampler.alpha <= 1.0)) {
    throw ConfigError("filter: soft resampling alpha must lie in [0, 1]");
  }
  if (!(resampler.lambda > 0.0)) throw ConfigError("filter: Gumbel temperature must be positive");
  if (gradient == GradientEstimator::Fisher && resampler.kind == ResamplerKind::Gumbel) {
    throw ConfigError("the Fisher estimator cannot be combined with Gumbel-softmax resampling");
  }
}

std::uint64_t FilterOutput::ancestry_signature() const {
  std::string buf;
  for (const StepTrace& s : trace) {
    buf.push_back(s.resampled ? '\1' : '\0');
    if (!s.resampled) continue;
    buf.append(reinterpret_cast<const char*>(s.ancestry.data()), s.ancestry.size() * sizeof(int));
  }
  return std::hash<std::string>{}(buf);
}

Particle propagate(const Particle& particle, const ssm::ProposalSpec& proposal, const Vec& eps) {
  const gauss::SymmetricRoot root(proposal.c, "proposal covariance");
  const int nx = static_cast<int>(proposal.mu.size());
  const int nth = static_cast<int>(particle.dx_dtheta.cols());
  Particle out;
  out.x = proposal.mu + root.root() * eps;

  Mat df_dx = proposal.dmu_dx;
  if (proposal.c_depends_on_x) {
    for (int k = 0; k < nx; ++k) {
      if (!is_zero(proposal.dc_dx[k])) df_dx.col(k) += root.derivative(proposal.dc_dx[k]) * eps;
    }
  }
  Mat df_dtheta = proposal.dmu_dtheta;
  for (int j = 0; j < nth; ++j) {
    if (!is_zero(proposal.dc_dtheta[j])) {
      df_dtheta.col(j) += root.derivative(proposal.dc_dtheta[j]) * eps;
    }
  }
  out.dx_dtheta = df_dx * particle.dx_dtheta + df_dtheta;
  out.logw = particle.logw;
  out.dlogw_dtheta = particle.dlogw_dtheta;
  return out;
}

IncrementalWeight incremental_logw_and_grad(const ssm::Model& model, const Vec& theta,
                                            const Particle& prev, const Particle& next,
                                            const ssm::ProposalSpec& proposal,
                                            const ssm::TransitionSpec& transition,
                                            const ssm::ObservationSpec& observation,
                                            const Vec& y) {
  const int nth = static_cast<int>(theta.size());
  const int nx = static_cast<int>(next.x.size());
  const Mat& dxp = prev.dx_dtheta;
  const Mat& dxn = next.dx_dtheta;
  IncrementalWeight out;
  out.dlog_sigma = Vec::Zero(nth);

  // log p(y | x_t): y is data, h and R move with x_t.
  auto add_likelihood = [&]() {
    const gauss::LogNormalEval e =
        gauss::log_normal_eval(y, observation.h, observation.r, "observation covariance");
    out.log_sigma += e.value;
    const Mat dh = observation.dh_dx * dxn + observation.dh_dtheta;
    for (int j = 0; j < nth; ++j) {
      double d = e.grad.dmu.dot(dh.col(j)) + contract(e.grad.dcov, observation.dr_dtheta[j]);
      if (observation.r_depends_on_x) {
        for (int k = 0; k < nx; ++k) d += contract(e.grad.dcov, observation.dr_dx[k]) * dxn(k, j);
      }
      out.dlog_sigma(j) += d;
    }
  };

  // sign * log N(x_t; m(x_{t-1}), S(x_{t-1})).
  auto add_state_density = [&](double sign, const Vec& mean, const Mat& cov, const Mat& dm_dx,
                               const Mat& dm_dtheta, const Slices& dcov_dtheta,
                               const Slices& dcov_dx, bool cov_on_x, std::string_view name) {
    const gauss::LogNormalEval e = gauss::log_normal_eval(next.x, mean, cov, name);
    out.log_sigma += sign * e.value;
    const Mat dm = dm_dx * dxp + dm_dtheta;
    for (int j = 0; j < nth; ++j) {
      double d = e.grad.dx.dot(dxn.col(j)) + e.grad.dmu.dot(dm.col(j)) +
                 contract(e.grad.dcov, dcov_dtheta[j]);
      if (cov_on_x) {
        for (int k = 0; k < nx; ++k) d += contract(e.grad.dcov, dcov_dx[k]) * dxp(k, j);
      }
      out.dlog_sigma(j) += sign * d;
    }
  };

  switch (model.incremental_weight_kind()) {
    case ssm::WeightKind::LikelihoodAtNewState:
      add_likelihood();
      break;
    case ssm::WeightKind::Predictive: {
      const ssm::PredictiveSpec p = model.predictive(prev.x, theta);
      const gauss::LogNormalEval e = gauss::log_normal_eval(y, p.mean, p.cov, "predictive covariance");
      out.log_sigma = e.value;
      const Mat dm = p.dmean_dx * dxp + p.dmean_dtheta;
      for (int j = 0; j < nth; ++j) {
        out.dlog_sigma(j) = e.grad.dmu.dot(dm.col(j)) + contract(e.grad.dcov, p.dcov_dtheta[j]);
      }
      break;
    }
    case ssm::WeightKind::FullRatio:
      add_likelihood();
      add_state_density(1.0, transition.a, transition.sigma, transition.da_dx, transition.da_dtheta,
                        transition.dsigma_dtheta, transition.dsigma_dx, transition.sigma_depends_on_x,
                        "transition covariance");
      add_state_density(-1.0, proposal.mu, proposal.c, proposal.dmu_dx, proposal.dmu_dtheta,
                        proposal.dc_dtheta, proposal.dc_dx, proposal.c_depends_on_x,
                        "proposal covariance");
      break;
  }
  return out;
}

double ess(std::span<const double> logw) {
  if (logw.empty()) throw DimensionError("ess: no weights");
  const double m = *std::max_element(logw.begin(), logw.end());
  if (!(m > kNegInf) || !std::isfinite(m)) throw DomainError("ess: all log-weights are -inf");
  double s1 = 0.0, s2 = 0.0;
  for (double v : logw) {
    const double w = std::exp(v - m);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

ResampleResult resample_crn(std::span<const Particle> particles, std::span<const double> u) {
  const std::size_t n = particles.size();
  if (u.size() != n) throw DimensionError("resample_crn: need one uniform per particle");
  const Normalised nw = normalise(particles);
  const Vec gbar = weighted_gradient(particles, nw.w);
  const double logw_new = nw.log_total - std::log(static_cast<double>(n));
  ResampleResult r;
  r.ancestry = draw_indices(nw.w, u);
  r.particles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Particle& parent = particles[r.ancestry[i]];
    r.particles[i].x = parent.x;
    r.particles[i].dx_dtheta = parent.dx_dtheta;
    r.particles[i].logw = logw_new;
    r.particles[i].dlogw_dtheta = gbar;
  }
  return r;
}

ResampleResult resample_soft(std::span<const Particle> particles, std::span<const double> u,
                             double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("resample_soft: alpha outside [0, 1]");
  const std::size_t n = particles.size();
  if (u.size() != n) throw DimensionError("resample_soft: need one uniform per particle");
  const Normalised nw = normalise(particles);
  const Vec gbar = weighted_gradient(particles, nw.w);
  std::vector<double> q(n);
  for (std::size_t j = 0; j < n; ++j) q[j] = alpha * nw.w[j] + (1.0 - alpha) / static_cast<double>(n);

  ResampleResult r;
  r.ancestry = draw_indices(q, u);
  std::vector<double> ratio(n);
  std::vector<Vec> dlog_ratio(n);
  double total = 0.0;
  Vec dtotal = Vec::Zero(gbar.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int k = r.ancestry[i];
    ratio[i] = nw.w[k] / q[k];
    dlog_ratio[i] = (particles[k].dlogw_dtheta - gbar) * (1.0 - alpha * nw.w[k] / q[k]);
    total += ratio[i];
  }
  for (std::size_t i = 0; i < n; ++i) dtotal += (ratio[i] / total) * dlog_ratio[i];

  r.particles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Particle& parent = particles[r.ancestry[i]];
    r.particles[i].x = parent.x;
    r.particles[i].dx_dtheta = parent.dx_dtheta;
    r.particles[i].logw = nw.log_total + std::log(ratio[i] / total);
    r.particles[i].dlogw_dtheta = gbar + dlog_ratio[i] - dtotal;
  }
  return r;
}

ResampleResult resample_gumbel(std::span<const Particle> particles, const Eigen::MatrixXd& gumbels,
                               double lambda) {
  if (!(lambda > 0.0)) throw DomainError("resample_gumbel: temperature must be positive");
  const int n = static_cast<int>(particles.size());
  if (gumbels.rows() != n || gumbels.cols() != n) {
    throw DimensionError("resample_gumbel: gumbel matrix must be N x N");
  }
  const Normalised nw = normalise(particles);
  const Vec gbar = weighted_gradient(particles, nw.w);
  const double logw_new = nw.log_total - std::log(static_cast<double>(n));
  const int nx = static_cast<int>(particles.front().x.size());
  const int nth = static_cast<int>(gbar.size());

  // d log w~_j for the particles with positive mass.
  std::vector<Vec> dlogwn(n);
  std::vector<double> logwn(n);
  for (int j = 0; j < n; ++j) {
    logwn[j] = nw.w[j] > 0.0 ? std::log(nw.w[j]) : kNegInf;
    dlogwn[j] = nw.w[j] > 0.0 ? Vec(particles[j].dlogw_dtheta - gbar) : Vec::Zero(nth);
  }

  ResampleResult r;
  r.ancestry.resize(n);
  r.particles.resize(n);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) {
    double m = kNegInf;
    int best = 0;
    for (int j = 0; j < n; ++j) {
      z(j) = (gumbels(i, j) + logwn[j]) / lambda;
      if (z(j) > m) {
        m = z(j);
        best = j;
      }
    }
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      z(j) = std::exp(z(j) - m);
      s += z(j);
    }
    z /= s;
    Vec zbar = Vec::Zero(nth);
    for (int j = 0; j < n; ++j) {
      if (z(j) > 0.0) zbar += z(j) * dlogwn[j];
    }
    Vec x = Vec::Zero(nx);
    Mat dx = Mat::Zero(nx, nth);
    for (int j = 0; j < n; ++j) {
      if (z(j) == 0.0) continue;
      const Particle& p = particles[j];
      x += z(j) * p.x;
      const Vec dz = z(j) * (dlogwn[j] - zbar) / lambda;
      dx += z(j) * p.dx_dtheta + p.x * dz.transpose();
    }
    r.ancestry[i] = best;
    r.particles[i].x = x;
    r.particles[i].dx_dtheta = dx;
    r.particles[i].logw = logw_new;
    r.particles[i].dlogw_dtheta = gbar;
  }
  return r;
}

FilterOutput run_filter(const ssm::Model& model, const Vec& theta, const std::vector<Vec>& y,
                        const FilterConfig& config, const NoiseBank& bank) {
  const bool fisher = config.gradient == GradientEstimator::Fisher;
  EngineResult r = run_engine(model, theta, y, config, bank, fisher, true);
  if (fisher) r.out.dloglik_dtheta = r.fisher;
  return std::move(r.out);
}

FilterOutput run_filter_general(const ssm::Model& model, const Vec& theta,
                                const std::vector<Vec>& y, const FilterConfig& config,
                                const NoiseBank& bank) {
  const bool fisher = config.gradient == GradientEstimator::Fisher;
  EngineResult r = run_engine(model, theta, y, config, bank, fisher, false);
  if (fisher) r.out.dloglik_dtheta = r.fisher;
  return std::move(r.out);
}

Vec fisher_gradient(const ssm::Model& model, const Vec& theta, const std::vector<Vec>& y,
                    const FilterConfig& config, const NoiseBank& bank) {
  return run_engine(model, theta, y, config, bank, true, false).fisher;
}

}  // namespace gradpf::dpf
