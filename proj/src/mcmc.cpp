#include "gradpf/mcmc.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gradpf::mcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

VectorXd standard_normal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd z(n);
  for (int k = 0; k < n; ++k) z(k) = nd(rng);
  return z;
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double joint(const PosteriorEval& e, const VectorXd& r) { return e.logpost - 0.5 * r.squaredNorm(); }

PosteriorEval failed_eval(int n, std::string why) {
  PosteriorEval e;
  e.grad = VectorXd::Zero(n);
  e.failure = std::move(why);
  return e;
}

}  // namespace

PriorComponent PriorComponent::normal(double mean, double sd) {
  if (!(sd > 0.0)) throw ConfigError("normal prior needs a positive standard deviation");
  return {Kind::Normal, mean, sd};
}

PriorComponent PriorComponent::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw ConfigError("gamma prior needs positive shape and rate");
  return {Kind::Gamma, shape, rate};
}

double PriorComponent::log_density(double v) const {
  if (kind == Kind::Normal) {
    const double z = (v - a) / b;
    return -0.5 * z * z - std::log(b) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  if (!(v > 0.0)) return kNegInf;
  return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(v) - b * v;
}

double PriorComponent::dlog_density(double v) const {
  if (kind == Kind::Normal) return -(v - a) / (b * b);
  return (a - 1.0) / v - b;
}

double PriorComponent::draw(std::mt19937_64& rng) const {
  if (kind == Kind::Normal) return std::normal_distribution<double>(a, b)(rng);
  return std::gamma_distribution<double>(a, 1.0 / b)(rng);
}

std::string PriorComponent::describe() const {
  std::ostringstream os;
  os << (kind == Kind::Normal ? "normal(" : "gamma(") << a << "," << b << ")";
  return os.str();
}

PriorComponent parse_prior(std::string_view text) {
  const auto open = text.find('(');
  const auto comma = text.find(',');
  const auto close = text.find(')');
  if (open == std::string_view::npos || comma == std::string_view::npos ||
      close == std::string_view::npos || !(open < comma && comma < close)) {
    throw ConfigError("malformed prior '" + std::string(text) + "'");
  }
  const std::string name(text.substr(0, open));
  double p1 = 0.0, p2 = 0.0;
  try {
    p1 = std::stod(std::string(text.substr(open + 1, comma - open - 1)));
    p2 = std::stod(std::string(text.substr(comma + 1, close - comma - 1)));
  } catch (const std::exception&) {
    throw ConfigError("malformed prior '" + std::string(text) + "'");
  }
  if (name == "normal") return PriorComponent::normal(p1, p2);
  if (name == "gamma") return PriorComponent::gamma(p1, p2);
  throw ConfigError("unknown prior family '" + name + "'");
}

Prior Prior::defaults(const ssm::Model& model) {
  using PC = PriorComponent;
  Prior p;
  switch (model.kind()) {
    case ssm::ModelKind::RandomWalk:
      p.components = {PC::gamma(2.0, 1.0)};
      break;
    case ssm::ModelKind::Lgss:
      p.components = {PC::normal(0.0, 1.0), PC::gamma(1.0, 1.0), PC::gamma(1.0, 1.0)};
      break;
    case ssm::ModelKind::StochasticVolatility:
      p.components = {PC::normal(0.0, 1.0), PC::normal(0.0, 1.0), PC::gamma(2.0, 10.0)};
      break;
    case ssm::ModelKind::Lorenz63:
      p.components.assign(model.param_dim(), PC::normal(0.0, 1.0));
      break;
  }
  return p;
}

double Prior::log_density(const VectorXd& theta) const {
  double s = 0.0;
  for (std::size_t j = 0; j < components.size(); ++j) s += components[j].log_density(theta(j));
  return s;
}

VectorXd to_constrained(const std::vector<ssm::Constraint>& c, const VectorXd& eta) {
  VectorXd theta = eta;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (c[j] == ssm::Constraint::Positive) theta(j) = std::exp(eta(j));
  }
  return theta;
}

VectorXd to_unconstrained(const std::vector<ssm::Constraint>& c, const VectorXd& theta) {
  VectorXd eta = theta;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (c[j] == ssm::Constraint::Positive) {
      if (!(theta(j) > 0.0)) throw DomainError("positive parameter must be > 0");
      eta(j) = std::log(theta(j));
    }
  }
  return eta;
}

FilterPosterior::FilterPosterior(ssm::Model model, std::vector<Vec> y, Prior prior,
                                 dpf::FilterConfig config, dpf::NoiseBank bank)
    : model_(std::move(model)),
      y_(std::move(y)),
      prior_(std::move(prior)),
      config_(config),
      bank_(bank) {
  if (static_cast<int>(prior_.components.size()) != model_.param_dim()) {
    throw ConfigError("prior has " + std::to_string(prior_.components.size()) +
                      " components, model has " + std::to_string(model_.param_dim()) +
                      " parameters");
  }
  config_.validate();
}

PosteriorEval FilterPosterior::operator()(const VectorXd& eta) const {
  const int n = model_.param_dim();
  if (eta.size() != n) throw DimensionError("log_posterior: parameter dimension");
  if (!eta.allFinite()) return failed_eval(n, "non-finite parameter");
  const auto& cons = model_.constraints();
  const VectorXd theta = to_constrained(cons, eta);
  double logprior = 0.0;
  VectorXd dprior(n);
  for (int j = 0; j < n; ++j) {
    logprior += prior_.components[j].log_density(theta(j));
    dprior(j) = prior_.components[j].dlog_density(theta(j));
  }
  if (!std::isfinite(logprior)) return failed_eval(n, "zero prior density");

  dpf::FilterOutput out;
  try {
    out = dpf::run_filter(model_, Vec(theta), y_, config_, bank_);
  } catch (const Error& e) {
    return failed_eval(n, e.what());
  }
  PosteriorEval r;
  r.loglik = out.loglik;
  r.logpost = out.loglik + logprior;
  r.grad.resize(n);
  for (int j = 0; j < n; ++j) {
    const double g = out.dloglik_dtheta(j) + dprior(j);
    if (cons[j] == ssm::Constraint::Positive) {
      r.logpost += eta(j);
      r.grad(j) = g * theta(j) + 1.0;
    } else {
      r.grad(j) = g;
    }
  }
  if (!std::isfinite(r.logpost) || !r.grad.allFinite()) {
    return failed_eval(n, "non-finite posterior");
  }
  r.failed = false;
  return r;
}

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Mala: return "mala";
    case KernelKind::Hmc: return "hmc";
    case KernelKind::Rhmc: return "rhmc";
    case KernelKind::Nuts: return "nuts";
  }
  return "unknown";
}

KernelKind parse_kernel(std::string_view text) {
  if (text == "mala") return KernelKind::Mala;
  if (text == "hmc") return KernelKind::Hmc;
  if (text == "rhmc") return KernelKind::Rhmc;
  if (text == "nuts") return KernelKind::Nuts;
  throw ConfigError("unknown sampler kernel '" + std::string(text) + "'");
}

void SamplerConfig::validate() const {
  if (epsilon < 0.0 || !std::isfinite(epsilon)) throw ConfigError("sampler: epsilon must be >= 0");
  if (leapfrog_steps < 1) throw ConfigError("sampler: L must be >= 1");
  if (!(mean_leapfrog_steps > 0.0)) throw ConfigError("sampler: mean_L must be positive");
  if (gamma < 0.0) throw ConfigError("sampler: gamma must be >= 0");
  if (max_tree_depth < 1) throw ConfigError("sampler: max_tree_depth must be >= 1");
  if (!(delta_max >= 0.0)) throw ConfigError("sampler: delta_max must be >= 0");
  if (iterations < 0) throw ConfigError("sampler: iterations must be >= 0");
  if (burn_in < 0) throw ConfigError("sampler: burn_in must be >= 0");
}

LeapfrogResult leapfrog(const Target& target, const VectorXd& eta, const VectorXd& momentum,
                        const PosteriorEval& eval, double epsilon) {
  LeapfrogResult r;
  const VectorXd half = momentum + 0.5 * epsilon * eval.grad;
  r.eta = eta + epsilon * half;
  r.eval = target(r.eta);
  r.momentum = r.eval.failed ? half : VectorXd(half + 0.5 * epsilon * r.eval.grad);
  return r;
}

double find_reasonable_epsilon(const Target& target, const ChainState& state, std::mt19937_64& rng) {
  if (state.eval.failed) throw Error("find_reasonable_epsilon: initial state has no valid posterior");
  double eps = 1.0;
  const VectorXd r = standard_normal(static_cast<int>(state.eta.size()), rng);
  const double h0 = joint(state.eval, r);
  auto log_ratio = [&](double e) {
    const LeapfrogResult lf = leapfrog(target, state.eta, r, state.eval, e);
    if (lf.eval.failed) return kNegInf;
    return joint(lf.eval, lf.momentum) - h0;
  };
  double lr = log_ratio(eps);
  const double a = lr > std::log(0.5) ? 1.0 : -1.0;
  for (int it = 0; a * lr > -a * std::numbers::ln2; ++it) {
    if (it >= 100) throw Error("find_reasonable_epsilon: no suitable step size after 100 iterations");
    eps *= std::pow(2.0, a);
    lr = log_ratio(eps);
  }
  return eps;
}

StepResult mala_step(const Target& target, const ChainState& state, double gamma,
                     std::mt19937_64& rng) {
  const double g2 = gamma * gamma;
  const int n = static_cast<int>(state.eta.size());
  StepResult out;
  out.state = state;
  const VectorXd fwd_mean = state.eta + 0.5 * g2 * state.eval.grad;
  const VectorXd prop = fwd_mean + gamma * standard_normal(n, rng);
  PosteriorEval e = target(prop);
  out.nge = 1;
  const double u = uniform01(rng);
  if (e.failed) return out;
  const VectorXd back_mean = prop + 0.5 * g2 * e.grad;
  const double log_q_fwd = -(prop - fwd_mean).squaredNorm() / (2.0 * g2);
  const double log_q_back = -(state.eta - back_mean).squaredNorm() / (2.0 * g2);
  const double log_alpha = e.logpost - state.eval.logpost + log_q_back - log_q_fwd;
  if (std::log(u) < std::min(0.0, log_alpha)) {
    out.state.eta = prop;
    out.state.eval = std::move(e);
    out.accepted = out.moved = true;
  }
  return out;
}

StepResult hmc_step(const Target& target, const ChainState& state, double epsilon, int steps,
                    std::mt19937_64& rng) {
  const int n = static_cast<int>(state.eta.size());
  StepResult out;
  out.state = state;
  const VectorXd r0 = standard_normal(n, rng);
  LeapfrogResult cur{state.eta, r0, state.eval};
  bool diverged = false;
  for (int l = 0; l < steps; ++l) {
    cur = leapfrog(target, cur.eta, cur.momentum, cur.eval, epsilon);
    ++out.nge;
    if (cur.eval.failed) {
      diverged = true;
      break;
    }
  }
  const double u = uniform01(rng);
  if (diverged) return out;
  const double log_alpha = joint(cur.eval, cur.momentum) - joint(state.eval, r0);
  if (std::log(u) < std::min(0.0, log_alpha)) {
    out.state.eta = cur.eta;
    out.state.eval = std::move(cur.eval);
    out.accepted = out.moved = true;
  }
  return out;
}

int rhmc_steps_from_draw(double exponential_draw) {
  return std::max(1, static_cast<int>(std::ceil(exponential_draw)));
}

StepResult rhmc_step(const Target& target, const ChainState& state, double epsilon,
                     double mean_steps, std::mt19937_64& rng) {
  const double draw = std::exponential_distribution<double>(1.0 / mean_steps)(rng);
  return hmc_step(target, state, epsilon, rhmc_steps_from_draw(draw), rng);
}

namespace {

struct Tree {
  VectorXd eta_minus, r_minus;
  PosteriorEval eval_minus;
  VectorXd eta_plus, r_plus;
  PosteriorEval eval_plus;
  VectorXd eta_prop;
  PosteriorEval eval_prop;
  double n = 0.0;
  bool ok = true;
};

struct NutsContext {
  const Target& target;
  double log_u;
  double epsilon;
  double delta_max;
  std::mt19937_64& rng;
  int nge = 0;
};

bool no_uturn(const VectorXd& eta_minus, const VectorXd& eta_plus, const VectorXd& r_minus,
              const VectorXd& r_plus) {
  const VectorXd d = eta_plus - eta_minus;
  return d.dot(r_minus) >= 0.0 && d.dot(r_plus) >= 0.0;
}

Tree build_tree(NutsContext& ctx, const VectorXd& eta, const VectorXd& r, const PosteriorEval& eval,
                int direction, int depth) {
  if (depth == 0) {
    LeapfrogResult lf = leapfrog(ctx.target, eta, r, eval, direction * ctx.epsilon);
    ++ctx.nge;
    Tree t;
    const double h = lf.eval.failed ? kNegInf : joint(lf.eval, lf.momentum);
    t.n = ctx.log_u <= h ? 1.0 : 0.0;
    t.ok = ctx.log_u < ctx.delta_max + h;
    t.eta_minus = t.eta_plus = t.eta_prop = lf.eta;
    t.r_minus = t.r_plus = lf.momentum;
    t.eval_minus = t.eval_plus = t.eval_prop = std::move(lf.eval);
    return t;
  }
  Tree t = build_tree(ctx, eta, r, eval, direction, depth - 1);
  if (!t.ok) return t;
  Tree u = direction < 0
               ? build_tree(ctx, t.eta_minus, t.r_minus, t.eval_minus, direction, depth - 1)
               : build_tree(ctx, t.eta_plus, t.r_plus, t.eval_plus, direction, depth - 1);
  if (direction < 0) {
    t.eta_minus = std::move(u.eta_minus);
    t.r_minus = std::move(u.r_minus);
    t.eval_minus = std::move(u.eval_minus);
  } else {
    t.eta_plus = std::move(u.eta_plus);
    t.r_plus = std::move(u.r_plus);
    t.eval_plus = std::move(u.eval_plus);
  }
  const double total = t.n + u.n;
  if (total > 0.0 && uniform01(ctx.rng) < u.n / total) {
    t.eta_prop = std::move(u.eta_prop);
    t.eval_prop = std::move(u.eval_prop);
  }
  t.n = total;
  t.ok = u.ok && no_uturn(t.eta_minus, t.eta_plus, t.r_minus, t.r_plus);
  return t;
}

}  // namespace

StepResult nuts_step(const Target& target, const ChainState& state, double epsilon,
                     int max_tree_depth, double delta_max, std::mt19937_64& rng) {
  const int n = static_cast<int>(state.eta.size());
  const VectorXd r0 = standard_normal(n, rng);
  NutsContext ctx{target, joint(state.eval, r0) + std::log(uniform01(rng)), epsilon, delta_max, rng};

  Tree whole;
  whole.eta_minus = whole.eta_plus = state.eta;
  whole.r_minus = whole.r_plus = r0;
  whole.eval_minus = whole.eval_plus = state.eval;
  StepResult out;
  out.state = state;
  double count = 1.0;
  for (int depth = 0; depth < max_tree_depth; ++depth) {
    const int direction = uniform01(rng) < 0.5 ? -1 : 1;
    Tree sub = direction < 0
                   ? build_tree(ctx, whole.eta_minus, whole.r_minus, whole.eval_minus, -1, depth)
                   : build_tree(ctx, whole.eta_plus, whole.r_plus, whole.eval_plus, 1, depth);
    if (direction < 0) {
      whole.eta_minus = sub.eta_minus;
      whole.r_minus = sub.r_minus;
      whole.eval_minus = sub.eval_minus;
    } else {
      whole.eta_plus = sub.eta_plus;
      whole.r_plus = sub.r_plus;
      whole.eval_plus = sub.eval_plus;
    }
    if (sub.ok && uniform01(rng) < std::min(1.0, sub.n / count)) {
      out.state.eta = sub.eta_prop;
      out.state.eval = sub.eval_prop;
    }
    count += sub.n;
    if (!sub.ok || !no_uturn(whole.eta_minus, whole.eta_plus, whole.r_minus, whole.r_plus)) break;
  }
  out.nge = ctx.nge;
  out.moved = out.state.eta != state.eta;
  out.accepted = out.moved;
  return out;
}

double tune_mala_gamma(const Target& target, const ChainState& state, std::mt19937_64& rng,
                       double target_rate, int trial_iterations) {
  double best = 0.0, best_gap = std::numeric_limits<double>::infinity();
  for (int k = -8; k <= 1; ++k) {
    const double gamma = std::pow(2.0, k);
    ChainState s = state;
    int acc = 0;
    for (int it = 0; it < trial_iterations; ++it) {
      StepResult r = mala_step(target, s, gamma, rng);
      acc += r.accepted ? 1 : 0;
      s = std::move(r.state);
    }
    const double gap = std::abs(static_cast<double>(acc) / trial_iterations - target_rate);
    if (gap < best_gap) {
      best_gap = gap;
      best = gamma;
    }
  }
  return best;
}

double Chain::acceptance_rate() const {
  if (rows.size() <= 1) return 0.0;
  int acc = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) acc += rows[i].accepted ? 1 : 0;
  return static_cast<double>(acc) / static_cast<double>(rows.size() - 1);
}

long Chain::total_nge() const {
  long s = 0;
  for (const ChainRow& r : rows) s += r.nge;
  return s;
}

Eigen::MatrixXd Chain::samples(int burn_in) const {
  const int first = 1 + std::max(0, burn_in);
  const int count = std::max(0, static_cast<int>(rows.size()) - first);
  const int dim = rows.empty() ? 0 : static_cast<int>(rows.front().theta.size());
  Eigen::MatrixXd m(count, dim);
  for (int i = 0; i < count; ++i) m.row(i) = rows[first + i].theta.transpose();
  return m;
}

Chain run_chain(const Target& base, const VectorXd& eta0, const SamplerConfig& config,
                std::uint64_t seed, const ChainOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  Chain chain;
  const Target target = [&](const VectorXd& eta) {
    PosteriorEval e = base(eta);
    if (e.failed) ++chain.failures;
    return e;
  };
  ChainState state{eta0, target(eta0)};
  if (state.eval.failed) {
    throw Error("initial parameter has no valid posterior: " + state.eval.failure);
  }
  chain.rows.reserve(config.iterations + 1);
  chain.rows.push_back({0, true, state.eval.logpost, 0, to_constrained(options.constraints, eta0)});
  if (config.iterations > 0) {
    if (config.kernel == KernelKind::Mala) {
      chain.epsilon = config.gamma > 0.0 ? config.gamma : tune_mala_gamma(target, state, rng);
    } else {
      chain.epsilon =
          config.epsilon > 0.0 ? config.epsilon : find_reasonable_epsilon(target, state, rng);
    }
  }
  for (int it = 1; it <= config.iterations; ++it) {
    if (options.before_iteration) options.before_iteration(it);
    StepResult r;
    switch (config.kernel) {
      case KernelKind::Mala: r = mala_step(target, state, chain.epsilon, rng); break;
      case KernelKind::Hmc:
        r = hmc_step(target, state, chain.epsilon, config.leapfrog_steps, rng);
        break;
      case KernelKind::Rhmc:
        r = rhmc_step(target, state, chain.epsilon, config.mean_leapfrog_steps, rng);
        break;
      case KernelKind::Nuts:
        r = nuts_step(target, state, chain.epsilon, config.max_tree_depth, config.delta_max, rng);
        break;
    }
    state = std::move(r.state);
    chain.rows.push_back(
        {it, r.accepted, state.eval.logpost, r.nge, to_constrained(options.constraints, state.eta)});
  }
  chain.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return chain;
}

VectorXd draw_initial(const Target& target, const Prior& prior,
                      const std::vector<ssm::Constraint>& constraints, std::mt19937_64& rng) {
  const int n = static_cast<int>(prior.components.size());
  for (int attempt = 0; attempt < 100; ++attempt) {
    VectorXd theta(n);
    bool ok = true;
    for (int j = 0; j < n; ++j) {
      theta(j) = prior.components[j].draw(rng);
      if (constraints[j] == ssm::Constraint::Positive) {
        // A normal prior on a positive parameter is read as its half-normal restriction.
        theta(j) = std::abs(theta(j));
        ok = ok && theta(j) > 0.0;
      }
    }
    if (!ok) continue;
    const VectorXd eta = to_unconstrained(constraints, theta);
    if (!target(eta).failed) return eta;
  }
  throw Error("no prior draw with a finite posterior in 100 attempts");
}

}  // namespace gradpf::mcmc
