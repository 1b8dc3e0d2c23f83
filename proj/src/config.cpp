#include "gradpf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace gradpf::cli {

namespace {

namespace fs = std::filesystem;

void check_keys(const YAML::Node& node, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError("section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key '" + section + "." + key + "'");
  }
}

template <typename T>
T get(const YAML::Node& node, const std::string& key, const std::string& section, T fallback) {
  const YAML::Node v = node[key];
  if (!v) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + section + "." + key + "'");
  }
}

Eigen::VectorXd vector_of(const YAML::Node& v, const std::string& what) {
  if (!v.IsSequence() || v.size() == 0) throw ConfigError("'" + what + "' must be a non-empty list");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  try {
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i].as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + what + "' must hold numbers");
  }
  return out;
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace

ssm::Model ExperimentConfig::make_model() const {
  ssm::Model m = [&] {
    switch (model_kind) {
      case ssm::ModelKind::RandomWalk: return ssm::Model::random_walk(obs_var);
      case ssm::ModelKind::Lgss: return ssm::Model::lgss();
      case ssm::ModelKind::StochasticVolatility: return ssm::Model::stochastic_volatility();
      case ssm::ModelKind::Lorenz63: return ssm::Model::lorenz63(lorenz);
    }
    throw ConfigError("unknown model");
  }();
  if (policy) m = m.with_policy(*policy);
  if (theta_true && theta_true->size() != m.param_dim()) {
    throw ConfigError("model.theta_true has " + std::to_string(theta_true->size()) +
                      " entries, model has " + std::to_string(m.param_dim()) + " parameters");
  }
  for (const auto& init : inits) {
    if (init.size() != m.param_dim()) throw ConfigError("sampler.init entries have wrong length");
  }
  return m;
}

mcmc::Prior ExperimentConfig::make_prior(const ssm::Model& model) const {
  if (priors.empty()) return mcmc::Prior::defaults(model);
  if (static_cast<int>(priors.size()) != model.param_dim()) {
    throw ConfigError("model.priors must have one entry per parameter");
  }
  mcmc::Prior p;
  for (const auto& s : priors) p.components.push_back(mcmc::parse_prior(s));
  return p;
}

ExperimentConfig parse_config(const std::string& yaml_text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;
  check_keys(root, "config", {"model", "data", "filter", "sampler", "sweep", "io", "diagnose"});

  if (const YAML::Node m = root["model"]) {
    check_keys(m, "model", {"kind", "proposal", "theta_true", "obs_var", "priors", "lorenz"});
    if (m["kind"]) c.model_kind = ssm::parse_model_kind(get<std::string>(m, "kind", "model", ""));
    if (m["proposal"]) c.policy = ssm::parse_proposal_policy(get<std::string>(m, "proposal", "model", ""));
    if (m["theta_true"]) c.theta_true = vector_of(m["theta_true"], "model.theta_true");
    c.obs_var = get<double>(m, "obs_var", "model", c.obs_var);
    if (m["priors"]) c.priors = get<std::vector<std::string>>(m, "priors", "model", {});
    if (const YAML::Node l = m["lorenz"]) {
      check_keys(l, "model.lorenz", {"sigma", "rho", "beta", "dt", "substeps", "observed",
                                     "estimate_obs_noise", "obs_noise", "x0"});
      auto& o = c.lorenz;
      o.sigma = get<double>(l, "sigma", "model.lorenz", o.sigma);
      o.rho = get<double>(l, "rho", "model.lorenz", o.rho);
      o.beta = get<double>(l, "beta", "model.lorenz", o.beta);
      o.dt = get<double>(l, "dt", "model.lorenz", o.dt);
      o.substeps = get<int>(l, "substeps", "model.lorenz", o.substeps);
      o.observed = get<int>(l, "observed", "model.lorenz", o.observed);
      o.estimate_obs_noise = get<bool>(l, "estimate_obs_noise", "model.lorenz", o.estimate_obs_noise);
      o.obs_noise = get<double>(l, "obs_noise", "model.lorenz", o.obs_noise);
      if (l["x0"]) {
        const Eigen::VectorXd x0 = vector_of(l["x0"], "model.lorenz.x0");
        if (x0.size() != 3) throw ConfigError("model.lorenz.x0 must have 3 entries");
        o.x0 = Vec(x0);
      }
    }
  }
  if (const YAML::Node d = root["data"]) {
    check_keys(d, "data", {"T", "seed", "path"});
    c.data_steps = get<int>(d, "T", "data", c.data_steps);
    c.data_seed = get<std::uint64_t>(d, "seed", "data", c.data_seed);
    c.data_path = resolve(get<std::string>(d, "path", "data", ""), base_dir);
    if (c.data_steps < 1) throw ConfigError("data.T must be >= 1");
  }
  if (const YAML::Node f = root["filter"]) {
    check_keys(f, "filter", {"particles", "resampler", "alpha", "lambda", "ess_threshold",
                             "gradient", "seed"});
    c.filter.particles = get<int>(f, "particles", "filter", c.filter.particles);
    if (f["resampler"]) c.filter.resampler.kind = dpf::parse_resampler(get<std::string>(f, "resampler", "filter", ""));
    c.filter.resampler.alpha = get<double>(f, "alpha", "filter", c.filter.resampler.alpha);
    c.filter.resampler.lambda = get<double>(f, "lambda", "filter", c.filter.resampler.lambda);
    c.filter.ess_threshold = get<double>(f, "ess_threshold", "filter", c.filter.ess_threshold);
    if (f["gradient"]) c.filter.gradient = dpf::parse_gradient_estimator(get<std::string>(f, "gradient", "filter", ""));
    c.filter_seed = get<std::uint64_t>(f, "seed", "filter", c.filter_seed);
  }
  c.filter.validate();
  if (const YAML::Node s = root["sampler"]) {
    check_keys(s, "sampler", {"kernel", "epsilon", "L", "mean_L", "gamma", "max_tree_depth",
                              "delta_max", "iterations", "burn_in", "chains", "seeds", "init",
                              "refresh_bank"});
    auto& sc = c.sampler;
    if (s["kernel"]) sc.kernel = mcmc::parse_kernel(get<std::string>(s, "kernel", "sampler", ""));
    sc.epsilon = get<double>(s, "epsilon", "sampler", sc.epsilon);
    sc.leapfrog_steps = get<int>(s, "L", "sampler", sc.leapfrog_steps);
    sc.mean_leapfrog_steps = get<double>(s, "mean_L", "sampler", sc.mean_leapfrog_steps);
    sc.gamma = get<double>(s, "gamma", "sampler", sc.gamma);
    sc.max_tree_depth = get<int>(s, "max_tree_depth", "sampler", sc.max_tree_depth);
    sc.delta_max = get<double>(s, "delta_max", "sampler", sc.delta_max);
    sc.iterations = get<int>(s, "iterations", "sampler", sc.iterations);
    sc.burn_in = get<int>(s, "burn_in", "sampler", sc.burn_in);
    c.chains = get<int>(s, "chains", "sampler", c.chains);
    if (s["seeds"]) c.seeds = get<std::vector<std::uint64_t>>(s, "seeds", "sampler", {});
    if (const YAML::Node init = s["init"]) {
      if (!init.IsSequence()) throw ConfigError("sampler.init must be a list of parameter lists");
      for (std::size_t i = 0; i < init.size(); ++i) c.inits.push_back(vector_of(init[i], "sampler.init"));
    }
    c.refresh_bank = get<bool>(s, "refresh_bank", "sampler", c.refresh_bank);
  }
  c.sampler.validate();
  if (c.chains < 1) throw ConfigError("sampler.chains must be >= 1");
  if (!c.seeds.empty() && static_cast<int>(c.seeds.size()) != c.chains) {
    throw ConfigError("sampler.seeds must list one seed per chain");
  }
  if (!c.inits.empty() && static_cast<int>(c.inits.size()) != c.chains) {
    throw ConfigError("sampler.init must list one start per chain");
  }
  if (const YAML::Node w = root["sweep"]) {
    check_keys(w, "sweep", {"lo", "hi", "points", "component", "combos", "replicates", "seed"});
    auto& sw = c.sweep;
    sw.lo = get<double>(w, "lo", "sweep", sw.lo);
    sw.hi = get<double>(w, "hi", "sweep", sw.hi);
    sw.points = get<int>(w, "points", "sweep", sw.points);
    sw.component = get<int>(w, "component", "sweep", sw.component);
    if (w["combos"]) sw.combos = get<std::vector<std::string>>(w, "combos", "sweep", {});
    sw.replicates = get<int>(w, "replicates", "sweep", sw.replicates);
    sw.seed = get<std::uint64_t>(w, "seed", "sweep", sw.seed);
    if (sw.points < 2) throw ConfigError("sweep.points must be >= 2");
    if (!(sw.hi > sw.lo)) throw ConfigError("sweep.hi must exceed sweep.lo");
    if (sw.replicates < 1) throw ConfigError("sweep.replicates must be >= 1");
    if (sw.combos.empty()) throw ConfigError("sweep.combos must not be empty");
  }
  if (const YAML::Node o = root["io"]) {
    check_keys(o, "io", {"out", "prices", "price_column", "ancestry"});
    c.out = resolve(get<std::string>(o, "out", "io", c.out), base_dir);
    c.prices = resolve(get<std::string>(o, "prices", "io", ""), base_dir);
    c.price_column = get<std::string>(o, "price_column", "io", c.price_column);
    c.write_ancestry = get<bool>(o, "ancestry", "io", c.write_ancestry);
  }
  if (const YAML::Node g = root["diagnose"]) {
    check_keys(g, "diagnose", {"max_lag", "iact", "chains"});
    c.max_lag = get<int>(g, "max_lag", "diagnose", c.max_lag);
    if (g["iact"]) c.iact = diag::parse_iact_method(get<std::string>(g, "iact", "diagnose", ""));
    for (const auto& p : get<std::vector<std::string>>(g, "chains", "diagnose", {})) {
      c.chain_files.push_back(resolve(p, base_dir));
    }
    if (c.max_lag < 1) throw ConfigError("diagnose.max_lag must be >= 1");
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace gradpf::cli
