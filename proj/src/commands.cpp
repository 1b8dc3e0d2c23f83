#include "gradpf/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "gradpf/kalman.hpp"

namespace gradpf::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

fs::path out_dir(const ExperimentConfig& cfg, const RunOptions& opts) {
  return fs::path(opts.out ? *opts.out : cfg.out);
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void log_wall(const std::string& command, const Stopwatch& sw) {
  std::cerr << "gradpf " << command << ": wall time " << io::fmt_double(sw.seconds()) << " s\n";
}

}  // namespace

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(std::max(count, 0));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, std::max(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

io::DataSeries load_observations(const ExperimentConfig& cfg, const ssm::Model& model,
                                 std::uint64_t seed) {
  if (!cfg.data_path.empty()) {
    io::DataSeries d = io::read_data_csv(cfg.data_path);
    if (d.observations.front().size() != model.obs_dim()) {
      throw ConfigError(cfg.data_path + ": observation dimension does not match the model");
    }
    return d;
  }
  if (!cfg.theta_true) throw ConfigError("need data.path or model.theta_true to obtain observations");
  const ssm::Simulation sim = model.generate(Vec(*cfg.theta_true), cfg.data_steps, seed);
  return {sim.states, sim.observations};
}

Combo parse_combo(const std::string& text) {
  const auto plus = text.find('+');
  if (plus == std::string::npos) throw ConfigError("sweep combo '" + text + "' must read proposal+resampler");
  Combo c;
  c.policy = ssm::parse_proposal_policy(text.substr(0, plus));
  c.resampler = dpf::parse_resampler(text.substr(plus + 1));
  c.label = text.substr(0, plus) + "_" + text.substr(plus + 1);
  return c;
}

int cmd_synth(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Stopwatch sw;
  const ssm::Model model = cfg.make_model();
  if (!cfg.theta_true) throw ConfigError("synth needs model.theta_true");
  const std::uint64_t seed = opts.seed.value_or(cfg.data_seed);
  ExperimentConfig local = cfg;
  local.data_path.clear();
  const io::DataSeries data = load_observations(local, model, seed);
  const fs::path dir = out_dir(cfg, opts);
  io::write_data_csv(dir / "data.csv", data);
  io::write_json(dir / "provenance.json", {{"source", "synthetic"},
                                           {"model", ssm::to_string(model.kind())},
                                           {"theta_true", vec_json(*cfg.theta_true)},
                                           {"T", cfg.data_steps},
                                           {"seed", seed}});
  log_wall("synth", sw);
  return 0;
}

int cmd_ingest(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Stopwatch sw;
  if (cfg.prices.empty()) throw ConfigError("ingest needs io.prices");
  const std::vector<double> prices = io::read_prices(cfg.prices, cfg.price_column);
  const std::vector<double> y = io::log_returns(prices);
  io::DataSeries data;
  for (double v : y) data.observations.push_back(Vec::Constant(1, v));
  const fs::path dir = out_dir(cfg, opts);
  io::write_data_csv(dir / "data.csv", data);
  io::write_json(dir / "provenance.json", {{"source", "ingested"},
                                           {"prices", fs::path(cfg.prices).filename().string()},
                                           {"column", cfg.price_column},
                                           {"T", y.size()}});
  log_wall("ingest", sw);
  return 0;
}

int cmd_filter(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Stopwatch sw;
  const ssm::Model model = cfg.make_model();
  Eigen::VectorXd theta;
  if (cfg.theta_true) {
    theta = *cfg.theta_true;
  } else if (!cfg.inits.empty()) {
    theta = cfg.inits.front();
  } else {
    throw ConfigError("filter needs model.theta_true or sampler.init");
  }
  const io::DataSeries data = load_observations(cfg, model, cfg.data_seed);
  const int steps = static_cast<int>(data.observations.size());
  const dpf::NoiseBank bank(opts.seed.value_or(cfg.filter_seed), steps, cfg.filter.particles,
                            model.state_dim());
  const dpf::FilterOutput out = dpf::run_filter(model, Vec(theta), data.observations, cfg.filter, bank);
  const fs::path dir = out_dir(cfg, opts);
  io::write_json(dir / "filter.json", io::to_json(out));
  if (cfg.write_ancestry) io::write_ancestry_csv(dir / "ancestry.csv", out);
  log_wall("filter", sw);
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Stopwatch sw;
  const ssm::Model base_model = cfg.make_model();
  const SweepSpec& sp = cfg.sweep;
  if (sp.component < 0 || sp.component >= base_model.param_dim()) {
    throw ConfigError("sweep.component out of range");
  }
  Eigen::VectorXd base_theta;
  if (cfg.theta_true) {
    base_theta = *cfg.theta_true;
  } else if (base_model.param_dim() == 1) {
    base_theta = Eigen::VectorXd::Constant(1, sp.lo);
  } else {
    throw ConfigError("sweep over a multi-parameter model needs model.theta_true");
  }
  std::vector<Combo> combos;
  std::vector<ssm::Model> models;
  for (const auto& s : sp.combos) {
    combos.push_back(parse_combo(s));
    models.push_back(base_model.with_policy(combos.back().policy));
  }
  const io::DataSeries data = load_observations(cfg, base_model, cfg.data_seed);
  const auto& y = data.observations;
  const int steps = static_cast<int>(y.size());
  const std::uint64_t seed = opts.seed.value_or(sp.seed);
  const int n = cfg.filter.particles;
  const int nx = base_model.state_dim();

  // Column layout: theta, kf_ll, kf_grad, then per combo (and replicate) ll, grad.
  std::vector<std::string> header = {"theta", "kf_ll", "kf_grad"};
  for (const Combo& c : combos) {
    const int reps = c.resampler == dpf::ResamplerKind::Multinomial ? sp.replicates : 1;
    for (int r = 0; r < reps; ++r) {
      const std::string tag = reps > 1 ? c.label + "_r" + std::to_string(r + 1) : c.label;
      header.push_back(tag + "_ll");
      header.push_back(tag + "_grad");
    }
  }
  std::vector<std::vector<double>> rows(sp.points, std::vector<double>(header.size(), kNaN));
  std::mutex log_mutex;
  parallel_for(sp.points, opts.jobs, [&](int k) {
    const double value = sp.lo + (sp.hi - sp.lo) * k / (sp.points - 1);
    Eigen::VectorXd theta = base_theta;
    theta(sp.component) = value;
    auto& row = rows[k];
    row[0] = value;
    auto note = [&](const std::string& what, const std::exception& e) {
      std::lock_guard<std::mutex> lock(log_mutex);
      std::cerr << "sweep: theta=" << io::fmt_double(value) << " " << what << ": " << e.what() << "\n";
    };
    if (base_model.is_linear_gaussian()) {
      try {
        const kalman::KfResult kf = kalman::kf_run(base_model, y, Vec(theta));
        row[1] = kf.loglik;
        row[2] = kf.grad(sp.component);
      } catch (const Error& e) {
        note("kf", e);
      }
    }
    std::size_t col = 3;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
      const Combo& c = combos[ci];
      dpf::FilterConfig fc = cfg.filter;
      fc.resampler.kind = c.resampler;
      const bool fresh = c.resampler == dpf::ResamplerKind::Multinomial;
      const int reps = fresh ? sp.replicates : 1;
      for (int r = 0; r < reps; ++r, col += 2) {
        const std::uint64_t bank_seed = fresh ? derive_seed(seed, 1000 + ci * 97 + r, k) : seed;
        const dpf::NoiseBank bank(bank_seed, steps, n, nx);
        try {
          const dpf::FilterOutput out = dpf::run_filter(models[ci], Vec(theta), y, fc, bank);
          row[col] = out.loglik;
          row[col + 1] = out.dloglik_dtheta(sp.component);
        } catch (const Error& e) {
          note(c.label, e);
        }
      }
    }
  });

  std::ostringstream os;
  os << "# sweep.csv: one row per grid value of theta component " << sp.component + 1
     << " (others fixed at model.theta_true)\n"
     << "# kf_ll, kf_grad: exact Kalman log-likelihood and its derivative (nan for nonlinear models)\n"
     << "# <proposal>_<resampler>_ll/_grad: particle filter estimates; crn, soft and gumbel share one\n"
     << "#   noise bank across the grid, multinomial draws fresh noise per point (_rK = replicate K)\n";
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << io::fmt_double(row[c]);
    os << "\n";
  }
  const fs::path dir = out_dir(cfg, opts);
  io::write_text(dir / "sweep.csv", os.str());
  log_wall("sweep", sw);
  const bool any_nan = std::any_of(rows.begin(), rows.end(), [](const auto& r) {
    return std::any_of(r.begin() + 3, r.end(), [](double v) { return std::isnan(v); });
  });
  return any_nan ? 2 : 0;
}

DiagnosticsStage write_diagnostics(const fs::path& dir, const std::vector<mcmc::Chain>& chains,
                                   int burn_in, const std::vector<std::string>& names,
                                   const std::optional<Eigen::VectorXd>& truth, int max_lag,
                                   diag::IactMethod method) {
  if (chains.empty()) throw ConfigError("diagnostics: no chains");
  DiagnosticsStage st;
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) shortest = std::min(shortest, c.rows.size());
  for (const auto& c : chains) {
    Eigen::MatrixXd d = c.samples(burn_in);
    const Eigen::Index keep = static_cast<Eigen::Index>(shortest) - 1 - burn_in;
    if (keep < 2) {
      throw ConfigError("diagnostics: fewer than two draws remain after burn-in (iterations must exceed burn_in + 1)");
    }
    st.draws.push_back(d.topRows(keep));
  }
  st.report = diag::summarize(st.draws, names, max_lag, method);
  double acc = 0.0;
  for (const auto& c : chains) acc += c.acceptance_rate();
  st.report.acceptance = acc / static_cast<double>(chains.size());
  if (truth) {
    if (truth->size() != st.draws.front().cols()) throw ConfigError("truth dimension mismatch");
    Eigen::MatrixXd all(st.draws.size() * st.draws.front().rows(), st.draws.front().cols());
    for (std::size_t c = 0; c < st.draws.size(); ++c) {
      all.middleRows(c * st.draws.front().rows(), st.draws.front().rows()) = st.draws[c];
    }
    st.report.mse = diag::mse(all, *truth);
  }
  io::write_json(dir / "report.json", io::to_json(st.report));

  const int lag = std::min<int>(max_lag, static_cast<int>(st.draws.front().rows()) - 1);
  std::ostringstream acf_csv;
  acf_csv << "chain,component,lag,rho\n";
  for (std::size_t c = 0; c < st.draws.size(); ++c) {
    for (Eigen::Index j = 0; j < st.draws[c].cols(); ++j) {
      const Eigen::VectorXd x = st.draws[c].col(j);
      std::vector<double> rho;
      try {
        rho = diag::acf(std::span<const double>(x.data(), x.size()), lag);
      } catch (const DomainError&) {
        continue;
      }
      for (int k = 0; k <= lag; ++k) {
        acf_csv << c + 1 << ',' << j + 1 << ',' << k << ',' << io::fmt_double(rho[k]) << "\n";
      }
    }
  }
  io::write_text(dir / "acf.csv", acf_csv.str());

  constexpr int kBins = 30;
  std::ostringstream hist;
  hist << "component,bin_lo,bin_hi,count\n";
  for (Eigen::Index j = 0; j < st.draws.front().cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& d : st.draws) {
      lo = std::min(lo, d.col(j).minCoeff());
      hi = std::max(hi, d.col(j).maxCoeff());
    }
    if (!(hi > lo)) hi = lo + 1.0;
    std::vector<long> counts(kBins, 0);
    for (const auto& d : st.draws) {
      for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const int b = std::min(kBins - 1, static_cast<int>((d(i, j) - lo) / (hi - lo) * kBins));
        ++counts[b];
      }
    }
    for (int b = 0; b < kBins; ++b) {
      hist << j + 1 << ',' << io::fmt_double(lo + (hi - lo) * b / kBins) << ','
           << io::fmt_double(lo + (hi - lo) * (b + 1) / kBins) << ',' << counts[b] << "\n";
    }
  }
  io::write_text(dir / "hist.csv", hist.str());
  return st;
}

int cmd_sample(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Stopwatch sw;
  const ssm::Model model = cfg.make_model();
  const mcmc::Prior prior = cfg.make_prior(model);
  if (cfg.sampler.iterations < cfg.sampler.burn_in + 2) {
    throw ConfigError("sampler.iterations must exceed sampler.burn_in + 1 to leave draws for diagnostics");
  }
  const io::DataSeries data = load_observations(cfg, model, cfg.data_seed);
  const int steps = static_cast<int>(data.observations.size());
  const fs::path dir = out_dir(cfg, opts);

  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (seeds.empty()) {
    const std::uint64_t base = opts.seed.value_or(1);
    for (int c = 0; c < cfg.chains; ++c) seeds.push_back(base + c);
  } else if (opts.seed) {
    for (auto& s : seeds) s += *opts.seed;
  }

  std::vector<mcmc::Chain> chains(cfg.chains);
  std::vector<std::string> errors(cfg.chains);
  std::vector<Eigen::VectorXd> starts(cfg.chains);
  parallel_for(cfg.chains, opts.jobs, [&](int c) {
    try {
      const dpf::NoiseBank bank(derive_seed(seeds[c], 1, 0), steps, cfg.filter.particles,
                                model.state_dim());
      mcmc::FilterPosterior posterior(model, data.observations, prior, cfg.filter, bank);
      const mcmc::Target target = [&posterior](const Eigen::VectorXd& eta) { return posterior(eta); };
      Eigen::VectorXd eta0;
      if (!cfg.inits.empty()) {
        eta0 = mcmc::to_unconstrained(model.constraints(), cfg.inits[c]);
      } else {
        std::mt19937_64 rng(derive_seed(seeds[c], 2, 0));
        eta0 = mcmc::draw_initial(target, prior, model.constraints(), rng);
      }
      starts[c] = mcmc::to_constrained(model.constraints(), eta0);
      mcmc::ChainOptions copts;
      copts.constraints = model.constraints();
      if (cfg.refresh_bank) {
        copts.before_iteration = [&posterior, bank](int it) { posterior.set_bank(bank.refreshed(it)); };
      }
      chains[c] = mcmc::run_chain(target, eta0, cfg.sampler, seeds[c], copts);
      io::write_chain_csv(dir / ("chain_" + std::to_string(c + 1) + ".csv"), chains[c]);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  });

  std::vector<mcmc::Chain> good;
  json runs = json::array();
  json timing = json::array();
  for (int c = 0; c < cfg.chains; ++c) {
    json r = {{"chain", c + 1}, {"seed", seeds[c]}};
    if (!errors[c].empty()) {
      r["error"] = errors[c];
      std::cerr << "sample: chain " << c + 1 << " failed: " << errors[c] << "\n";
    } else {
      r["init"] = vec_json(starts[c]);
      r["step_size"] = chains[c].epsilon;
      r["acc_rate"] = chains[c].acceptance_rate();
      r["total_nge"] = chains[c].total_nge();
      r["failed_evaluations"] = chains[c].failures;
      const Eigen::MatrixXd d = chains[c].samples(cfg.sampler.burn_in);
      r["mean"] = vec_json(d.colwise().mean().transpose());
      Eigen::VectorXd sd(d.cols());
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        sd(j) = std::sqrt((d.col(j).array() - d.col(j).mean()).square().sum() / std::max<Eigen::Index>(d.rows() - 1, 1));
      }
      r["sd"] = vec_json(sd);
      r["wall_seconds"] = chains[c].wall_seconds;
      timing.push_back({{"chain", c + 1}, {"wall_seconds", chains[c].wall_seconds}});
      good.push_back(chains[c]);
    }
    runs.push_back(r);
  }
  json summary = {{"model", ssm::to_string(model.kind())},
                  {"kernel", mcmc::to_string(cfg.sampler.kernel)},
                  {"parameters", model.param_names()},
                  {"chains", runs}};
  if (cfg.theta_true) summary["theta_true"] = vec_json(*cfg.theta_true);
  if (!good.empty()) {
    // Pooled over the surviving chains.
    std::vector<Eigen::MatrixXd> draws;
    Eigen::Index rows = 0;
    double acc = 0.0, wall = 0.0;
    long nge = 0;
    for (const mcmc::Chain& ch : good) {
      draws.push_back(ch.samples(cfg.sampler.burn_in));
      rows += draws.back().rows();
      acc += ch.acceptance_rate();
      nge += ch.total_nge();
      wall += ch.wall_seconds;
    }
    Eigen::MatrixXd all(rows, draws.front().cols());
    Eigen::Index at = 0;
    for (const auto& d : draws) {
      all.middleRows(at, d.rows()) = d;
      at += d.rows();
    }
    const Eigen::VectorXd mean = all.colwise().mean().transpose();
    Eigen::VectorXd sd(all.cols());
    for (Eigen::Index j = 0; j < all.cols(); ++j) {
      sd(j) = std::sqrt((all.col(j).array() - mean(j)).square().sum() / std::max<Eigen::Index>(rows - 1, 1));
    }
    summary["mean"] = vec_json(mean);
    summary["sd"] = vec_json(sd);
    summary["acc_rate"] = acc / static_cast<double>(good.size());
    summary["total_nge"] = nge;
    summary["wall_seconds"] = wall;
  }
  int code = good.size() == chains.size() ? 0 : 2;
  if (!good.empty()) {
    const DiagnosticsStage st = write_diagnostics(dir, good, cfg.sampler.burn_in, model.param_names(),
                                                  cfg.theta_true, cfg.max_lag, cfg.iact);
    summary["report"] = io::to_json(st.report);
  }
  io::write_json(dir / "summary.json", summary);
  timing.push_back({{"total_wall_seconds", sw.seconds()}});
  io::write_json(dir / "timing.json", timing);
  log_wall("sample", sw);
  return code;
}

int cmd_diagnose(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Stopwatch sw;
  if (cfg.chain_files.empty()) throw ConfigError("diagnose needs diagnose.chains");
  std::vector<mcmc::Chain> chains;
  for (const auto& p : cfg.chain_files) chains.push_back(io::read_chain_csv(p));
  const auto dim = chains.front().rows.front().theta.size();
  for (const auto& c : chains) {
    if (c.rows.empty() || c.rows.front().theta.size() != dim) {
      throw Error("diagnose: chain files have mismatched schemas");
    }
  }
  std::vector<std::string> names;
  std::optional<Eigen::VectorXd> truth;
  try {
    const ssm::Model model = cfg.make_model();
    if (model.param_dim() == static_cast<int>(dim)) {
      names = model.param_names();
      truth = cfg.theta_true;
    }
  } catch (const ConfigError&) {
  }
  write_diagnostics(out_dir(cfg, opts), chains, cfg.sampler.burn_in, names, truth, cfg.max_lag,
                    cfg.iact);
  log_wall("diagnose", sw);
  return 0;
}

}  // namespace gradpf::cli
