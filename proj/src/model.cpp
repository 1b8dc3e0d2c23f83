#include "gradpf/model.hpp"

#include <cmath>
#include <random>

#include "gradpf/gaussian.hpp"
#include "gradpf/kalman.hpp"

namespace gradpf::ssm {

namespace {

Slices zero_slices(int rows, int cols, int count) {
  Slices s;
  for (int k = 0; k < count; ++k) s[k] = Mat::Zero(rows, cols);
  return s;
}

ObservationSpec blank_observation(int ny, int nx, int ntheta) {
  ObservationSpec o;
  o.h = Vec::Zero(ny);
  o.r = Mat::Zero(ny, ny);
  o.dh_dx = Mat::Zero(ny, nx);
  o.dh_dtheta = Mat::Zero(ny, ntheta);
  o.dr_dtheta = zero_slices(ny, ny, ntheta);
  o.dr_dx = zero_slices(ny, ny, nx);
  o.d2h_dx2 = zero_slices(nx, nx, ny);
  o.d2h_dxdtheta = zero_slices(nx, ntheta, ny);
  return o;
}

TransitionSpec blank_transition(int nx, int ntheta) {
  TransitionSpec t;
  t.a = Vec::Zero(nx);
  t.sigma = Mat::Zero(nx, nx);
  t.da_dx = Mat::Zero(nx, nx);
  t.da_dtheta = Mat::Zero(nx, ntheta);
  t.dsigma_dtheta = zero_slices(nx, nx, ntheta);
  t.dsigma_dx = zero_slices(nx, nx, nx);
  return t;
}

ProposalSpec proposal_from_transition(const TransitionSpec& t) {
  ProposalSpec p;
  p.mu = t.a;
  p.c = t.sigma;
  p.dmu_dx = t.da_dx;
  p.dmu_dtheta = t.da_dtheta;
  p.dc_dx = t.dsigma_dx;
  p.dc_dtheta = t.dsigma_dtheta;
  p.c_depends_on_x = t.sigma_depends_on_x;
  return p;
}

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

Vec3 lorenz_rhs(const Vec3& s, const Lorenz63Options& o) {
  return Vec3(o.sigma * (s(1) - s(0)), s(0) * (o.rho - s(2)) - s(1), s(0) * s(1) - o.beta * s(2));
}

Mat3 lorenz_rhs_jacobian(const Vec3& s, const Lorenz63Options& o) {
  Mat3 j;
  j << -o.sigma, o.sigma, 0.0,
       o.rho - s(2), -1.0, -s(0),
       s(1), s(0), -o.beta;
  return j;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomWalk: return "randomwalk";
    case ModelKind::Lgss: return "lgss";
    case ModelKind::StochasticVolatility: return "sv";
    case ModelKind::Lorenz63: return "lorenz63";
  }
  return "unknown";
}

std::string_view to_string(ProposalPolicy policy) {
  switch (policy) {
    case ProposalPolicy::Prior: return "prior";
    case ProposalPolicy::Optimal: return "optimal";
    case ProposalPolicy::Ekf: return "ekf";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "randomwalk") return ModelKind::RandomWalk;
  if (text == "lgss") return ModelKind::Lgss;
  if (text == "sv") return ModelKind::StochasticVolatility;
  if (text == "lorenz63") return ModelKind::Lorenz63;
  throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

ProposalPolicy parse_proposal_policy(std::string_view text) {
  if (text == "prior") return ProposalPolicy::Prior;
  if (text == "optimal") return ProposalPolicy::Optimal;
  if (text == "ekf") return ProposalPolicy::Ekf;
  throw ConfigError("unknown proposal policy '" + std::string(text) + "'");
}

Model Model::random_walk(double obs_var, ProposalPolicy policy) {
  if (!(obs_var > 0.0)) throw ConfigError("randomwalk: observation variance must be positive");
  Model m;
  m.kind_ = ModelKind::RandomWalk;
  m.nx_ = m.ny_ = m.ntheta_ = 1;
  m.constraints_ = {Constraint::Positive};
  m.names_ = {"theta"};
  m.obs_var_ = obs_var;
  return m.with_policy(policy);
}

Model Model::lgss(ProposalPolicy policy) {
  Model m;
  m.kind_ = ModelKind::Lgss;
  m.nx_ = m.ny_ = 1;
  m.ntheta_ = 3;
  m.constraints_ = {Constraint::Unconstrained, Constraint::Positive, Constraint::Positive};
  m.names_ = {"phi", "sigma_v", "sigma_e"};
  return m.with_policy(policy);
}

Model Model::stochastic_volatility(ProposalPolicy policy) {
  Model m;
  m.kind_ = ModelKind::StochasticVolatility;
  m.nx_ = m.ny_ = 1;
  m.ntheta_ = 3;
  m.constraints_ = {Constraint::Unconstrained, Constraint::Unconstrained, Constraint::Positive};
  m.names_ = {"mu", "phi", "sigma_v"};
  return m.with_policy(policy);
}

Model Model::lorenz63(const Lorenz63Options& options, ProposalPolicy policy) {
  if (options.observed < 1 || options.observed > 3) {
    throw ConfigError("lorenz63: observed dimension must be in [1, 3]");
  }
  if (options.substeps < 1 || !(options.dt > 0.0)) {
    throw ConfigError("lorenz63: need positive dt and substeps");
  }
  if (options.x0.size() != 3) throw ConfigError("lorenz63: x0 must have 3 components");
  Model m;
  m.kind_ = ModelKind::Lorenz63;
  m.nx_ = 3;
  m.ny_ = options.observed;
  m.lorenz_ = options;
  if (options.estimate_obs_noise) {
    m.ntheta_ = 2;
    m.constraints_ = {Constraint::Positive, Constraint::Positive};
    m.names_ = {"sigma_q", "sigma_r"};
  } else {
    m.ntheta_ = 1;
    m.constraints_ = {Constraint::Positive};
    m.names_ = {"sigma_q"};
  }
  return m.with_policy(policy);
}

Model Model::with_policy(ProposalPolicy policy) const {
  const bool ok = policy == ProposalPolicy::Prior ||
                  (policy == ProposalPolicy::Optimal && kind_ == ModelKind::Lgss) ||
                  (policy == ProposalPolicy::Ekf &&
                   (kind_ == ModelKind::RandomWalk || kind_ == ModelKind::Lgss));
  if (!ok) {
    throw ConfigError("proposal policy '" + std::string(to_string(policy)) +
                      "' is not supported for model '" + std::string(to_string(kind_)) + "'");
  }
  Model m = *this;
  m.policy_ = policy;
  return m;
}

void Model::check_theta(const Vec& theta) const {
  if (theta.size() != ntheta_) {
    throw DimensionError(std::string(to_string(kind_)) + ": expected " + std::to_string(ntheta_) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  for (int j = 0; j < ntheta_; ++j) {
    if (!std::isfinite(theta(j))) throw DomainError("non-finite parameter " + names_[j]);
    if (constraints_[j] == Constraint::Positive && !(theta(j) > 0.0)) {
      throw DomainError("parameter " + names_[j] + " must be positive");
    }
  }
}

FlowStep lorenz_flow(const Vec& x, const Lorenz63Options& o, int substeps, double dt) {
  const double h = dt / substeps;
  Vec3 s(x(0), x(1), x(2));
  Mat3 jac = Mat3::Identity();
  for (int k = 0; k < substeps; ++k) {
    const Vec3 k1 = lorenz_rhs(s, o);
    const Mat3 j1 = lorenz_rhs_jacobian(s, o) * jac;
    const Vec3 s2 = s + 0.5 * h * k1;
    const Vec3 k2 = lorenz_rhs(s2, o);
    const Mat3 j2 = lorenz_rhs_jacobian(s2, o) * (jac + 0.5 * h * j1);
    const Vec3 s3 = s + 0.5 * h * k2;
    const Vec3 k3 = lorenz_rhs(s3, o);
    const Mat3 j3 = lorenz_rhs_jacobian(s3, o) * (jac + 0.5 * h * j2);
    const Vec3 s4 = s + h * k3;
    const Vec3 k4 = lorenz_rhs(s4, o);
    const Mat3 j4 = lorenz_rhs_jacobian(s4, o) * (jac + h * j3);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    jac += (h / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
  }
  if (!s.allFinite() || !jac.allFinite()) {
    throw DivergenceError(-1, "Lorenz-63 integration produced a non-finite state");
  }
  FlowStep out;
  out.x = Vec(s);
  out.jacobian = Mat(jac);
  return out;
}

TransitionSpec Model::lorenz_transition(const Vec& x, const Vec& theta) const {
  TransitionSpec t = blank_transition(nx_, ntheta_);
  FlowStep step = lorenz_flow(x, lorenz_, lorenz_.substeps, lorenz_.dt);
  t.a = step.x;
  t.da_dx = step.jacobian;
  const double sq = theta(0);
  t.sigma = sq * sq * Mat::Identity(3, 3);
  t.dsigma_dtheta[0] = 2.0 * sq * Mat::Identity(3, 3);
  return t;
}

TransitionSpec Model::transition(const Vec& x, const Vec& theta) const {
  if (x.size() != nx_) throw DimensionError("transition: state dimension mismatch");
  TransitionSpec t = blank_transition(nx_, ntheta_);
  switch (kind_) {
    case ModelKind::RandomWalk: {
      const double s = theta(0);
      t.a = x;
      t.sigma(0, 0) = s * s;
      t.da_dx(0, 0) = 1.0;
      t.dsigma_dtheta[0](0, 0) = 2.0 * s;
      break;
    }
    case ModelKind::Lgss: {
      const double phi = theta(0), sv = theta(1);
      t.a(0) = phi * x(0);
      t.sigma(0, 0) = sv * sv;
      t.da_dx(0, 0) = phi;
      t.da_dtheta(0, 0) = x(0);
      t.dsigma_dtheta[1](0, 0) = 2.0 * sv;
      break;
    }
    case ModelKind::StochasticVolatility: {
      const double mu = theta(0), phi = theta(1), sv = theta(2);
      t.a(0) = mu + phi * (x(0) - mu);
      t.sigma(0, 0) = sv * sv;
      t.da_dx(0, 0) = phi;
      t.da_dtheta(0, 0) = 1.0 - phi;
      t.da_dtheta(0, 1) = x(0) - mu;
      t.dsigma_dtheta[2](0, 0) = 2.0 * sv;
      break;
    }
    case ModelKind::Lorenz63:
      return lorenz_transition(x, theta);
  }
  return t;
}

ObservationSpec Model::observation(const Vec& x, const Vec& theta) const {
  if (x.size() != nx_) throw DimensionError("observation: state dimension mismatch");
  ObservationSpec o = blank_observation(ny_, nx_, ntheta_);
  switch (kind_) {
    case ModelKind::RandomWalk:
      o.h = x;
      o.r(0, 0) = obs_var_;
      o.dh_dx(0, 0) = 1.0;
      break;
    case ModelKind::Lgss: {
      const double se = theta(2);
      o.h = x;
      o.r(0, 0) = se * se;
      o.dh_dx(0, 0) = 1.0;
      o.dr_dtheta[2](0, 0) = 2.0 * se;
      break;
    }
    case ModelKind::StochasticVolatility: {
      const double v = std::exp(x(0));
      o.r(0, 0) = v;
      o.dr_dx[0](0, 0) = v;
      o.r_depends_on_x = true;
      break;
    }
    case ModelKind::Lorenz63: {
      const double sr = lorenz_.estimate_obs_noise ? theta(1) : lorenz_.obs_noise;
      for (int i = 0; i < ny_; ++i) {
        o.h(i) = x(i);
        o.dh_dx(i, i) = 1.0;
      }
      o.r = sr * sr * Mat::Identity(ny_, ny_);
      if (lorenz_.estimate_obs_noise) o.dr_dtheta[1] = 2.0 * sr * Mat::Identity(ny_, ny_);
      break;
    }
  }
  return o;
}

ProposalSpec Model::proposal(const Vec& x, const Vec& theta, const Vec& y) const {
  switch (policy_) {
    case ProposalPolicy::Prior:
      return proposal_from_transition(transition(x, theta));
    case ProposalPolicy::Ekf: {
      const TransitionSpec t = transition(x, theta);
      const ObservationSpec o = observation(t.a, theta);
      return kalman::ekf_proposal(t, o, y);
    }
    case ProposalPolicy::Optimal: {
      // Only LGSS has a closed-form optimal proposal.
      const double phi = theta(0), sv = theta(1), se = theta(2);
      const double v = sv * sv, e = se * se, tot = v + e, tot2 = tot * tot;
      const double xp = x(0), yv = y(0);
      ProposalSpec p;
      p.mu = Vec::Constant(1, (yv * v + phi * xp * e) / tot);
      p.c = Mat::Constant(1, 1, v * e / tot);
      p.dmu_dx = Mat::Constant(1, 1, phi * e / tot);
      p.dmu_dtheta = Mat::Zero(1, 3);
      p.dmu_dtheta(0, 0) = xp * e / tot;
      p.dmu_dtheta(0, 1) = 2.0 * sv * e * (yv - phi * xp) / tot2;
      p.dmu_dtheta(0, 2) = 2.0 * se * v * (phi * xp - yv) / tot2;
      p.dc_dx = zero_slices(1, 1, 1);
      p.dc_dtheta = zero_slices(1, 1, 3);
      p.dc_dtheta[1](0, 0) = 2.0 * sv * e * e / tot2;
      p.dc_dtheta[2](0, 0) = 2.0 * se * v * v / tot2;
      return p;
    }
  }
  throw ConfigError("unsupported proposal policy");
}

PredictiveSpec Model::predictive(const Vec& x, const Vec& theta) const {
  if (kind_ != ModelKind::Lgss) {
    throw ConfigError("predictive weight is only available for the LGSS model");
  }
  const double phi = theta(0), sv = theta(1), se = theta(2);
  PredictiveSpec p;
  p.mean = Vec::Constant(1, phi * x(0));
  p.cov = Mat::Constant(1, 1, sv * sv + se * se);
  p.dmean_dx = Mat::Constant(1, 1, phi);
  p.dmean_dtheta = Mat::Zero(1, 3);
  p.dmean_dtheta(0, 0) = x(0);
  p.dcov_dtheta = zero_slices(1, 1, 3);
  p.dcov_dtheta[1](0, 0) = 2.0 * sv;
  p.dcov_dtheta[2](0, 0) = 2.0 * se;
  return p;
}

ScalarDensity Model::scalar_transition(double x, const Vec& theta) const {
  ScalarDensity d;
  switch (kind_) {
    case ModelKind::RandomWalk: {
      const double s = theta(0);
      d.m = x;
      d.dm_dx = 1.0;
      d.v = s * s;
      d.dv_dtheta[0] = 2.0 * s;
      return d;
    }
    case ModelKind::Lgss: {
      const double phi = theta(0), sv = theta(1);
      d.m = phi * x;
      d.dm_dx = phi;
      d.dm_dtheta[0] = x;
      d.v = sv * sv;
      d.dv_dtheta[1] = 2.0 * sv;
      return d;
    }
    case ModelKind::StochasticVolatility: {
      const double mu = theta(0), phi = theta(1), sv = theta(2);
      d.m = mu + phi * (x - mu);
      d.dm_dx = phi;
      d.dm_dtheta[0] = 1.0 - phi;
      d.dm_dtheta[1] = x - mu;
      d.v = sv * sv;
      d.dv_dtheta[2] = 2.0 * sv;
      return d;
    }
    case ModelKind::Lorenz63:
      break;
  }
  throw DimensionError("scalar_transition: model is not one-dimensional");
}

ScalarDensity Model::scalar_observation(double x, const Vec& theta) const {
  ScalarDensity d;
  switch (kind_) {
    case ModelKind::RandomWalk:
      d.m = x;
      d.dm_dx = 1.0;
      d.v = obs_var_;
      return d;
    case ModelKind::Lgss: {
      const double se = theta(2);
      d.m = x;
      d.dm_dx = 1.0;
      d.v = se * se;
      d.dv_dtheta[2] = 2.0 * se;
      return d;
    }
    case ModelKind::StochasticVolatility:
      d.v = std::exp(x);
      d.dv_dx = d.v;
      d.v_depends_on_x = true;
      return d;
    case ModelKind::Lorenz63:
      break;
  }
  throw DimensionError("scalar_observation: model is not one-dimensional");
}

ScalarDensity Model::scalar_proposal(double x, const Vec& theta, double y) const {
  switch (policy_) {
    case ProposalPolicy::Prior:
      return scalar_transition(x, theta);
    case ProposalPolicy::Optimal: {
      const double phi = theta(0), sv = theta(1), se = theta(2);
      const double v = sv * sv, e = se * se, tot = v + e, tot2 = tot * tot;
      ScalarDensity d;
      d.m = (y * v + phi * x * e) / tot;
      d.v = v * e / tot;
      d.dm_dx = phi * e / tot;
      d.dm_dtheta[0] = x * e / tot;
      d.dm_dtheta[1] = 2.0 * sv * e * (y - phi * x) / tot2;
      d.dm_dtheta[2] = 2.0 * se * v * (phi * x - y) / tot2;
      d.dv_dtheta[1] = 2.0 * sv * e * e / tot2;
      d.dv_dtheta[2] = 2.0 * se * v * v / tot2;
      return d;
    }
    case ProposalPolicy::Ekf: {
      // Scalar EKF update linearised at the prior mean, the one-dimensional
      // case of kalman::ekf_proposal.
      const ScalarDensity tr = scalar_transition(x, theta);
      const ScalarDensity ob = scalar_observation(tr.m, theta);
      const double s = tr.v, h = ob.m, hx = ob.dm_dx, r = ob.v;
      const double innov_var = hx * hx * s + r;
      if (innov_var == 0.0) {
        throw SingularMatrixError("ekf_proposal: innovation covariance is singular");
      }
      const double gain = hx * s / innov_var;
      const double resid = y - h;
      ScalarDensity d;
      d.m = tr.m + gain * resid;
      d.v = s - gain * hx * s;
      // Derivatives along one direction from the directional derivatives of
      // the prior mean, s, h, h_x and r.
      auto along = [&](double da, double ds, double dh, double dhx, double dr, double& dm,
                       double& dv) {
        const double dsv = 2.0 * hx * dhx * s + hx * hx * ds + dr;
        const double dgain = (dhx * s + hx * ds - gain * dsv) / innov_var;
        dm = da + dgain * resid - gain * dh;
        dv = ds - (dgain * hx * s + gain * dhx * s + gain * hx * ds);
      };
      auto dr_along = [&](double da) { return ob.v_depends_on_x ? ob.dv_dx * da : 0.0; };
      {
        const double da = tr.dm_dx;
        along(da, tr.v_depends_on_x ? tr.dv_dx : 0.0, hx * da, ob.d2m_dx2 * da, dr_along(da),
              d.dm_dx, d.dv_dx);
      }
      for (int j = 0; j < ntheta_; ++j) {
        const double da = tr.dm_dtheta[j];
        along(da, tr.dv_dtheta[j], hx * da + ob.dm_dtheta[j],
              ob.d2m_dx2 * da + ob.d2m_dxdtheta[j], ob.dv_dtheta[j] + dr_along(da),
              d.dm_dtheta[j], d.dv_dtheta[j]);
      }
      d.v_depends_on_x = d.dv_dx != 0.0;
      return d;
    }
  }
  throw ConfigError("unsupported proposal policy");
}

ScalarDensity Model::scalar_predictive(double x, const Vec& theta) const {
  if (kind_ != ModelKind::Lgss) {
    throw ConfigError("predictive weight is only available for the LGSS model");
  }
  const double phi = theta(0), sv = theta(1), se = theta(2);
  ScalarDensity d;
  d.m = phi * x;
  d.dm_dx = phi;
  d.dm_dtheta[0] = x;
  d.v = sv * sv + se * se;
  d.dv_dtheta[1] = 2.0 * sv;
  d.dv_dtheta[2] = 2.0 * se;
  return d;
}

WeightKind Model::incremental_weight_kind() const {
  switch (policy_) {
    case ProposalPolicy::Prior: return WeightKind::LikelihoodAtNewState;
    case ProposalPolicy::Optimal: return WeightKind::Predictive;
    case ProposalPolicy::Ekf: return WeightKind::FullRatio;
  }
  return WeightKind::FullRatio;
}

InitialState Model::initial(const Vec& theta, const Vec& eps) const {
  InitialState s;
  s.dx_dtheta = Mat::Zero(nx_, ntheta_);
  switch (kind_) {
    case ModelKind::RandomWalk:
    case ModelKind::Lgss:
      s.x = Vec::Zero(1);
      break;
    case ModelKind::StochasticVolatility: {
      const double mu = theta(0), phi = theta(1), sv = theta(2);
      const double one_minus = 1.0 - phi * phi;
      if (!(one_minus > 0.0)) {
        throw DomainError("sv: stationary initial state needs |phi| < 1");
      }
      const double root = std::sqrt(one_minus);
      const double scale = sv / root;
      s.x = Vec::Constant(1, mu + scale * eps(0));
      s.dx_dtheta(0, 0) = 1.0;
      s.dx_dtheta(0, 1) = eps(0) * sv * phi / (one_minus * root);
      s.dx_dtheta(0, 2) = eps(0) / root;
      break;
    }
    case ModelKind::Lorenz63:
      s.x = lorenz_.x0;
      break;
  }
  return s;
}

InitialDensity Model::initial_density(const Vec& theta) const {
  if (!initial_is_random()) throw ConfigError("initial state is deterministic for this model");
  const double phi = theta(1), sv = theta(2);
  const double one_minus = 1.0 - phi * phi;
  if (!(one_minus > 0.0)) throw DomainError("sv: stationary initial state needs |phi| < 1");
  InitialDensity d;
  d.mean = Vec::Constant(1, theta(0));
  d.cov = Mat::Constant(1, 1, sv * sv / one_minus);
  d.dmean_dtheta = Mat::Zero(1, 3);
  d.dmean_dtheta(0, 0) = 1.0;
  d.dcov_dtheta = zero_slices(1, 1, 3);
  d.dcov_dtheta[1](0, 0) = 2.0 * phi * sv * sv / (one_minus * one_minus);
  d.dcov_dtheta[2](0, 0) = 2.0 * sv / one_minus;
  return d;
}

LinearGaussianForm Model::linear_form(const Vec& theta) const {
  if (!is_linear_gaussian()) {
    throw ConfigError("model '" + std::string(to_string(kind_)) + "' is not linear-Gaussian");
  }
  check_theta(theta);
  LinearGaussianForm lf;
  const int n = ntheta_;
  lf.f = Mat::Zero(1, 1);
  lf.q = Mat::Zero(1, 1);
  lf.h = Mat::Identity(1, 1);
  lf.r = Mat::Zero(1, 1);
  lf.p0 = Mat::Zero(1, 1);
  lf.b = Vec::Zero(1);
  lf.c = Vec::Zero(1);
  lf.m0 = Vec::Zero(1);
  lf.df = lf.dq = lf.dh = lf.dr = lf.dp0 = zero_slices(1, 1, n);
  for (int j = 0; j < n; ++j) lf.db[j] = lf.dc[j] = lf.dm0[j] = Vec::Zero(1);
  if (kind_ == ModelKind::RandomWalk) {
    lf.f(0, 0) = 1.0;
    lf.q(0, 0) = theta(0) * theta(0);
    lf.r(0, 0) = obs_var_;
    lf.dq[0](0, 0) = 2.0 * theta(0);
  } else {
    lf.f(0, 0) = theta(0);
    lf.q(0, 0) = theta(1) * theta(1);
    lf.r(0, 0) = theta(2) * theta(2);
    lf.df[0](0, 0) = 1.0;
    lf.dq[1](0, 0) = 2.0 * theta(1);
    lf.dr[2](0, 0) = 2.0 * theta(2);
  }
  return lf;
}

Simulation Model::generate(const Vec& theta, int steps, std::uint64_t seed) const {
  if (steps < 1) throw ConfigError("generate: need at least one time step");
  check_theta(theta);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int n) {
    Vec z(n);
    for (int k = 0; k < n; ++k) z(k) = normal(rng);
    return z;
  };
  Simulation sim;
  sim.states.reserve(steps);
  sim.observations.reserve(steps);
  Vec x = initial(theta, draw(nx_)).x;
  for (int t = 1; t <= steps; ++t) {
    TransitionSpec tr;
    try {
      tr = transition(x, theta);
    } catch (const DivergenceError& e) {
      throw DivergenceError(t, e.what());
    }
    x = tr.a + gauss::spd_sqrt(tr.sigma, "transition covariance") * draw(nx_);
    const ObservationSpec ob = observation(x, theta);
    Vec y = ob.h + gauss::spd_sqrt(ob.r, "observation covariance") * draw(ny_);
    if (!x.allFinite() || !y.allFinite()) throw DivergenceError(t, "non-finite simulated value");
    sim.states.push_back(x);
    sim.observations.push_back(y);
  }
  return sim;
}

}  // namespace gradpf::ssm
