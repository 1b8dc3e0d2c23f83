// Acceptance suite: one line per criterion, `--only N` to run a single one.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ekf_instances.hpp"
#include "gradpf/commands.hpp"
#include "gradpf/diagnostics.hpp"
#include "gradpf/filter.hpp"
#include "gradpf/kalman.hpp"
#include "gradpf/mcmc.hpp"
#include "gradpf/model.hpp"
#include "targets.hpp"

using namespace gradpf;
using dpf::FilterConfig;
using dpf::NoiseBank;
using dpf::ResamplerKind;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ssm::Model;

namespace {

struct Outcome {
  bool pass = false;
  std::string measured;
};

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome()> run;
};

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

FilterConfig filter_config(int n, ResamplerKind kind) {
  FilterConfig c;
  c.particles = n;
  c.resampler.kind = kind;
  return c;
}

Vec scalar(double v) { return Vec::Constant(1, v); }

double rel_err(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

// Mean of (x - mean)^2 over draws with its IACT-based Monte Carlo standard error.
struct Moments {
  double mean, mean_mcse, var, var_mcse;
};

Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const int lag = static_cast<int>(x.size() / 4);
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
  const double v = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
  double vv = 0.0;
  for (double s : sq) vv += (s - v) * (s - v);
  vv /= n;
  Moments out;
  out.mean = m;
  out.mean_mcse = std::sqrt(v * diag::iact(x, lag) / n);
  out.var = v;
  out.var_mcse = std::sqrt(vv * diag::iact(sq, lag) / n);
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  ssm::Lorenz63Options lo;
  lo.estimate_obs_noise = true;
  struct Case {
    Model model;
    Vec truth;
    int steps, particles;
    std::function<Vec(std::mt19937_64&)> draw;
  };
  auto uni = [](double a, double b) { return std::uniform_real_distribution<double>(a, b); };
  std::vector<Case> cases;
  cases.push_back({Model::random_walk(1.0), scalar(2.0), 50, 100,
                   [&](std::mt19937_64& r) { return scalar(uni(1.0, 4.0)(r)); }});
  cases.push_back({Model::lgss(), Vec(Eigen::Vector3d(0.7, 1.2, 1.0)), 50, 100, [&](std::mt19937_64& r) {
                     return Vec(Eigen::Vector3d(uni(-0.9, 0.9)(r), uni(0.5, 2.0)(r), uni(0.5, 2.0)(r)));
                   }});
  cases.push_back({Model::stochastic_volatility(), Vec(Eigen::Vector3d(-0.2, 0.95, 0.2)), 50, 100,
                   [&](std::mt19937_64& r) {
                     return Vec(Eigen::Vector3d(uni(-1.0, 1.0)(r), uni(0.5, 0.98)(r), uni(0.1, 0.5)(r)));
                   }});
  cases.push_back({Model::lorenz63(lo), Vec(Eigen::Vector2d(1.2, 1.2)), 20, 50, [&](std::mt19937_64& r) {
                     return Vec(Eigen::Vector2d(uni(0.5, 2.0)(r), uni(0.5, 2.0)(r)));
                   }});
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_model;
  for (const Case& c : cases) {
    const auto y = c.model.generate(c.truth, c.steps, 11).observations;
    const NoiseBank bank(12, c.steps, c.particles, c.model.state_dim());
    const FilterConfig cfg = filter_config(c.particles, ResamplerKind::None);
    for (int rep = 0; rep < 20; ++rep) {
      const Vec th = c.draw(rng);
      const Vec g = dpf::run_filter(c.model, th, y, cfg, bank).dloglik_dtheta;
      for (int j = 0; j < th.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(th(j)));
        Vec tp = th, tm = th;
        tp(j) += h;
        tm(j) -= h;
        const double fd = (dpf::run_filter(c.model, tp, y, cfg, bank).loglik -
                           dpf::run_filter(c.model, tm, y, cfg, bank).loglik) /
                          (2.0 * h);
        const double e = rel_err(g(j), fd);
        if (e > worst) {
          worst = e;
          worst_model = std::string(ssm::to_string(c.model.kind()));
        }
      }
    }
  }
  return {worst < 1e-4, "max rel err " + fmt("%.2e", worst) + " (" + worst_model + ")"};
}

// Shared data for the random-walk grid experiments.
struct RandomWalkSetup {
  Model model = Model::random_walk(1.0, ssm::ProposalPolicy::Ekf);
  std::vector<Vec> y;
  RandomWalkSetup() { y = model.generate(scalar(2.0), 250, 2024).observations; }
};

Outcome exact_filter_equivalence() {
  const RandomWalkSetup s;
  const NoiseBank bank(7, 250, 2000, 1);
  const FilterConfig cfg = filter_config(2000, ResamplerKind::Crn);
  double total = 0.0, worst = 0.0;
  const int points = 50;
  for (int k = 0; k < points; ++k) {
    const Vec th = scalar(1.0 + 3.0 * k / (points - 1));
    const double pf = dpf::run_filter(s.model, th, s.y, cfg, bank).loglik;
    const double kf = kalman::kf_loglik(s.model, s.y, th);
    const double d = std::abs(pf - kf) / std::abs(kf);
    total += d;
    worst = std::max(worst, d);
  }
  const double mean = total / points;
  return {mean < 0.005, "mean rel dev " + fmt("%.2e", mean) + ", max " + fmt("%.2e", worst)};
}

Outcome piecewise_continuity() {
  const RandomWalkSetup s;
  const int n = 2000, points = 500;
  const NoiseBank bank(7, 250, n, 1);
  const FilterConfig crn = filter_config(n, ResamplerKind::Crn);
  const FilterConfig mult = filter_config(n, ResamplerKind::Multinomial);
  const double spacing = 3.0 / (points - 1);
  auto run = [&](const FilterConfig& c, double th) { return dpf::run_filter(s.model, scalar(th), s.y, c, bank); };

  // The ancestry changes between every pair of neighbouring grid points at
  // this N and T, so the identical-ancestry interval starting at each grid
  // point is located by halving the step towards the next grid point.
  int crn_ok = 0, mult_fail = 0, intervals = 0, unresolved = 0, grid_runs = 1;
  double worst = 0.0, width_sum = 0.0, last_width = spacing;
  std::vector<double> grid_grad;
  std::uint64_t prev_sig = 0;
  for (int k = 0; k < points; ++k) {
    const double a = 1.0 + spacing * k;
    const auto oa = run(crn, a);
    const std::uint64_t sig = oa.ancestry_signature();
    if (k > 0 && sig != prev_sig) ++grid_runs;
    prev_sig = sig;
    grid_grad.push_back(oa.dloglik_dtheta(0));
    double d = std::min(spacing, 64.0 * last_width);
    bool found = false;
    dpf::FilterOutput ob, om;
    for (int it = 0; it < 60 && d > 1e-13; ++it, d *= 0.5) {
      ob = run(crn, a + d);
      if (ob.ancestry_signature() != sig) continue;
      om = run(crn, a + 0.5 * d);
      if (om.ancestry_signature() != sig) continue;
      found = true;
      break;
    }
    ++intervals;
    if (!found) {
      ++unresolved;
      continue;
    }
    last_width = d;
    width_sum += d;
    const double secant = (ob.loglik - oa.loglik) / d;
    const double e = rel_err(secant, om.dloglik_dtheta(0));
    worst = std::max(worst, e);
    if (e <= 1e-2) ++crn_ok;

    const double msec = (run(mult, a + d).loglik - run(mult, a).loglik) / d;
    if (rel_err(msec, run(mult, a + 0.5 * d).dloglik_dtheta(0)) > 1e-2) ++mult_fail;
    if (k % 100 == 99) progress("criterion 3: " + std::to_string(k + 1) + "/500 grid points");
  }
  // Grid-level jumps of the CRN gradient, for reference.
  std::vector<double> jumps;
  for (std::size_t k = 1; k < grid_grad.size(); ++k) jumps.push_back(std::abs(grid_grad[k] - grid_grad[k - 1]));
  std::vector<double> sorted = jumps;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const auto big = std::count_if(jumps.begin(), jumps.end(), [&](double j) { return j > 10.0 * median; });

  const double fail_frac = static_cast<double>(mult_fail) / intervals;
  std::ostringstream m;
  m << "crn " << crn_ok << "/" << intervals << " intervals within 1e-2 (worst " << fmt("%.1e", worst)
    << ", mean width " << fmt("%.1e", width_sum / std::max(1, intervals - unresolved)) << ", "
    << unresolved << " unresolved, " << grid_runs << " grid-level runs); multinomial fails "
    << fmt("%.1f", 100.0 * fail_frac) << "%; grid jumps >10x median: "
    << fmt("%.1f", 100.0 * big / jumps.size()) << "%";
  return {crn_ok == intervals && fail_frac > 0.2, m.str()};
}

Outcome conservation() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> pick_n(2, 64), pick_dim(1, 3);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const ResamplerKind kinds[] = {ResamplerKind::Crn, ResamplerKind::Multinomial, ResamplerKind::Soft,
                                 ResamplerKind::Gumbel};
  double worst_total = 0.0, worst_grad = 0.0;
  int uniform_checked = 0, uniform_exact = 0;
  auto lse = [](const std::vector<dpf::Particle>& ps) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : ps) m = std::max(m, p.logw);
    double s = 0.0;
    for (const auto& p : ps) s += std::exp(p.logw - m);
    return m + std::log(s);
  };
  auto weighted = [](const std::vector<dpf::Particle>& ps, double log_total, double& scale) {
    Vec g = Vec::Zero(ps.front().dlogw_dtheta.size());
    scale = 0.0;
    for (const auto& p : ps) {
      const double w = std::exp(p.logw - log_total);
      g += w * p.dlogw_dtheta;
      scale += w * p.dlogw_dtheta.norm();
    }
    return g;
  };
  for (int inst = 0; inst < 1000; ++inst) {
    const ResamplerKind kind = kinds[inst % 4];
    const int n = pick_n(rng), nx = pick_dim(rng), nth = pick_dim(rng);
    std::vector<dpf::Particle> ps(n);
    for (auto& p : ps) {
      p.x = Vec(nx);
      p.dx_dtheta = Mat(nx, nth);
      p.dlogw_dtheta = Vec(nth);
      for (int a = 0; a < nx; ++a) {
        p.x(a) = z(rng);
        for (int b = 0; b < nth; ++b) p.dx_dtheta(a, b) = z(rng);
      }
      for (int b = 0; b < nth; ++b) p.dlogw_dtheta(b) = z(rng);
      p.logw = 3.0 * z(rng) + 10.0 * z(rng) * (inst % 7 == 0);
    }
    std::vector<double> u(n);
    for (double& v : u) v = 1.0 - u01(rng);  // (0, 1]
    dpf::ResampleResult r;
    switch (kind) {
      case ResamplerKind::Crn:
        r = dpf::resample_crn(ps, u);
        break;
      case ResamplerKind::Multinomial: {
        const NoiseBank bank(inst, 1, n, 1);
        for (int i = 0; i < n; ++i) u[i] = bank.keyed_uniform(0x5eed + inst, 1, i);
        r = dpf::resample_crn(ps, u);
        break;
      }
      case ResamplerKind::Soft:
        r = dpf::resample_soft(ps, u, 0.2 + 0.6 * u01(rng));
        break;
      case ResamplerKind::Gumbel: {
        std::extreme_value_distribution<double> gumbel(0.0, 1.0);
        MatrixXd g(n, n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) g(i, j) = gumbel(rng);
        r = dpf::resample_gumbel(ps, g, 0.1 + u01(rng));
        break;
      }
      case ResamplerKind::None:
        break;
    }
    const double before = lse(ps), after = lse(r.particles);
    worst_total = std::max(worst_total, std::abs(std::expm1(after - before)));
    double scale_b = 0.0, scale_a = 0.0;
    const Vec gb = weighted(ps, before, scale_b);
    const Vec ga = weighted(r.particles, before, scale_a);
    worst_grad = std::max(worst_grad, (ga - gb).norm() / std::max(scale_b, 1e-300));
    if (kind != ResamplerKind::Soft) {
      ++uniform_checked;
      const double m = r.particles.front().logw;
      bool exact = true;
      double s = 0.0;
      for (const auto& p : r.particles) s += std::exp(p.logw - m);
      for (const auto& p : r.particles) exact = exact && (std::exp(p.logw - m) / s == 1.0 / n);
      uniform_exact += exact;
    }
  }
  std::ostringstream m;
  m << "max rel total " << fmt("%.1e", worst_total) << ", max rel grad-sum " << fmt("%.1e", worst_grad)
    << ", exact 1/N in " << uniform_exact << "/" << uniform_checked << " (crn, multinomial, gumbel)";
  return {worst_total <= 1e-12 && worst_grad <= 1e-12 && uniform_exact == uniform_checked, m.str()};
}

// Particle-filter posterior wrapped as a sampler target.
struct PosteriorRun {
  mcmc::FilterPosterior posterior;
  mcmc::Target target;
  PosteriorRun(const Model& m, const std::vector<Vec>& y, const FilterConfig& c, std::uint64_t bank_seed)
      : posterior(m, y, mcmc::Prior::defaults(m), c,
                  NoiseBank(bank_seed, static_cast<int>(y.size()), c.particles, m.state_dim())) {
    target = [this](const VectorXd& eta) { return posterior(eta); };
  }
  PosteriorRun(const PosteriorRun&) = delete;
};

mcmc::ChainOptions options_for(const Model& m) {
  mcmc::ChainOptions o;
  o.constraints = m.constraints();
  return o;
}

Outcome lgss_nuts_recovery() {
  const Model m = Model::lgss();
  const VectorXd truth = Eigen::Vector3d(0.7, 1.2, 1.0);
  const auto y = m.generate(truth, 100, 77).observations;
  const FilterConfig c = filter_config(512, ResamplerKind::Crn);
  double mse_sum = 0.0, nge_sum = 0.0;
  std::vector<double> per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PosteriorRun run(m, y, c, cli::derive_seed(seed, 1, 0));
    std::mt19937_64 rng(cli::derive_seed(seed, 2, 0));
    const VectorXd eta0 = mcmc::draw_initial(run.target, run.posterior.prior(), m.constraints(), rng);
    mcmc::SamplerConfig sc;
    sc.kernel = mcmc::KernelKind::Nuts;
    sc.iterations = 9;  // M = 10 states including the start
    const mcmc::Chain chain = mcmc::run_chain(run.target, eta0, sc, seed, options_for(m));
    const double e = diag::mse(chain.samples(0), truth);
    per_seed.push_back(e);
    mse_sum += e;
    nge_sum += static_cast<double>(chain.total_nge());
  }
  const double mean = mse_sum / 10.0;
  double var = 0.0;
  for (double e : per_seed) var += (e - mean) * (e - mean);
  std::ostringstream msg;
  msg << "MSE " << fmt("%.3f", mean) << " +/- " << fmt("%.3f", std::sqrt(var / 9.0)) << ", mean NGE "
      << fmt("%.1f", nge_sum / 10.0);
  return {mean >= 0.05 && mean <= 0.45, msg.str()};
}

Outcome gelman_rubin() {
  const Model m = Model::lgss();
  const VectorXd truth = Eigen::Vector3d(0.7, 1.2, 1.0);
  const auto y = m.generate(truth, 250, 78).observations;
  const FilterConfig c = filter_config(750, ResamplerKind::Crn);
  const std::vector<VectorXd> starts = {Eigen::Vector3d(0.3, 0.8, 1.5), Eigen::Vector3d(0.9, 2.0, 0.6),
                                        Eigen::Vector3d(0.5, 1.0, 1.0)};
  std::vector<MatrixXd> draws;
  VectorXd mean = VectorXd::Zero(3);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::uint64_t seed = k + 1;
    PosteriorRun run(m, y, c, cli::derive_seed(seed, 1, 0));
    mcmc::SamplerConfig sc;
    sc.kernel = mcmc::KernelKind::Nuts;
    sc.iterations = 499;  // M = 500 states including the start
    const mcmc::Chain chain = mcmc::run_chain(run.target, mcmc::to_unconstrained(m.constraints(), starts[k]),
                                              sc, seed, options_for(m));
    draws.push_back(chain.samples(100));
    mean += draws.back().colwise().mean().transpose() / 3.0;
    progress("criterion 6: chain " + std::to_string(k + 1) + " done in " + fmt("%.0f", chain.wall_seconds) +
             "s, NGE " + std::to_string(chain.total_nge()));
  }
  double worst = 0.0;
  std::ostringstream msg;
  msg << "Rhat";
  for (int j = 0; j < 3; ++j) {
    const double r = diag::gelman_rubin(draws, j);
    worst = std::max(worst, r);
    msg << " " << fmt("%.4f", r);
  }
  msg << ", pooled mean [" << fmt("%.3f", mean(0)) << ", " << fmt("%.3f", mean(1)) << ", "
      << fmt("%.3f", mean(2)) << "]";
  return {worst < 1.05, msg.str()};
}

Outcome sampler_ordering() {
  const Model m = Model::stochastic_volatility();
  const VectorXd truth = Eigen::Vector3d(-0.2, 0.95, 0.2);
  const auto y = m.generate(truth, 500, 79).observations;
  const FilterConfig c = filter_config(1000, ResamplerKind::Crn);
  const VectorXd start = Eigen::Vector3d(0.0, 0.9, 0.25);
  const int burn = 500;

  struct Result {
    std::string name;
    std::vector<double> ess;
    VectorXd mean, sd;
  };
  auto run_kernel = [&](const std::string& name, mcmc::SamplerConfig sc) {
    PosteriorRun run(m, y, c, 31);
    sc.iterations = 1999;  // M = 2000 states including the start
    const mcmc::Chain chain =
        mcmc::run_chain(run.target, mcmc::to_unconstrained(m.constraints(), start), sc, 32, options_for(m));
    const MatrixXd d = chain.samples(burn);
    Result r{name, {}, d.colwise().mean().transpose(), VectorXd(3)};
    for (int j = 0; j < 3; ++j) {
      std::vector<double> col(d.rows());
      for (Eigen::Index i = 0; i < d.rows(); ++i) col[i] = d(i, j);
      r.ess.push_back(diag::ess(col, static_cast<int>(d.rows() / 3)));
      r.sd(j) = std::sqrt((d.col(j).array() - r.mean(j)).square().sum() / (d.rows() - 1));
    }
    progress("criterion 7: " + name + " done in " + fmt("%.0f", chain.wall_seconds) + "s, acc " +
             fmt("%.2f", chain.acceptance_rate()) + ", NGE " + std::to_string(chain.total_nge()));
    return r;
  };
  mcmc::SamplerConfig nuts;
  nuts.kernel = mcmc::KernelKind::Nuts;
  mcmc::SamplerConfig mala;
  mala.kernel = mcmc::KernelKind::Mala;
  mcmc::SamplerConfig hmc;
  hmc.kernel = mcmc::KernelKind::Hmc;
  hmc.leapfrog_steps = 1;
  const Result rn = run_kernel("nuts", nuts);
  const Result rm = run_kernel("mala", mala);
  const Result rh = run_kernel("hmc1", hmc);

  bool pass = true;
  std::ostringstream msg;
  for (const Result* r : {&rn, &rm, &rh}) {
    msg << r->name << " ESS [" << fmt("%.0f", r->ess[0]) << "," << fmt("%.0f", r->ess[1]) << ","
        << fmt("%.0f", r->ess[2]) << "]; ";
  }
  for (int j = 0; j < 3; ++j) {
    pass = pass && rn.ess[j] > rm.ess[j] && rn.ess[j] > rh.ess[j];
    pass = pass && std::abs(rn.mean(j) - truth(j)) <= 3.0 * rn.sd(j);
  }
  msg << "nuts mean [" << fmt("%.3f", rn.mean(0)) << "," << fmt("%.3f", rn.mean(1)) << ","
      << fmt("%.3f", rn.mean(2)) << "] sd [" << fmt("%.3f", rn.sd(0)) << "," << fmt("%.3f", rn.sd(1)) << ","
      << fmt("%.3f", rn.sd(2)) << "]";
  return {pass, msg.str()};
}

Outcome lorenz_desk_check() {
  ssm::Lorenz63Options lo;
  const Model m = Model::lorenz63(lo);
  const VectorXd truth = VectorXd::Constant(1, 1.2);
  const auto y = m.generate(truth, 50, 80).observations;
  const ResamplerKind kinds[] = {ResamplerKind::Crn, ResamplerKind::Gumbel, ResamplerKind::Soft};
  double crn_sum = 0.0;
  int wins = 0;
  std::ostringstream msg;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    double mse[3];
    VectorXd eta0;
    double epsilon = 0.0;
    for (int k = 0; k < 3; ++k) {
      PosteriorRun run(m, y, filter_config(500, kinds[k]), cli::derive_seed(seed, 1, 0));
      if (k == 0) {
        std::mt19937_64 rng(cli::derive_seed(seed, 2, 0));
        eta0 = mcmc::draw_initial(run.target, run.posterior.prior(), m.constraints(), rng);
      }
      mcmc::SamplerConfig sc;
      sc.kernel = mcmc::KernelKind::Nuts;
      sc.iterations = 9;  // M = 10 states including the start
      sc.epsilon = epsilon;
      const mcmc::Chain chain = mcmc::run_chain(run.target, eta0, sc, seed, options_for(m));
      if (k == 0) epsilon = chain.epsilon;
      mse[k] = diag::mse(chain.samples(0), truth);
    }
    crn_sum += mse[0];
    wins += mse[0] <= mse[1] && mse[0] <= mse[2];
    msg << (seed > 1 ? "; " : "") << "seed " << seed << " crn/gs/sr " << fmt("%.3f", mse[0]) << "/"
        << fmt("%.3f", mse[1]) << "/" << fmt("%.3f", mse[2]);
    progress("criterion 8: seed " + std::to_string(seed) + " done");
  }
  const double mean = crn_sum / 5.0;
  return {mean <= 0.3 && wins >= 4,
          "crn mean MSE " + fmt("%.3f", mean) + ", crn best in " + std::to_string(wins) + "/5 (" + msg.str() + ")"};
}

Outcome ekf_derivative_suite() {
  std::mt19937_64 rng(909);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int n = k < 50 ? 1 : 2;
    const auto e = testutil::EkfInstance::random(n, rng);
    const Vec x = testutil::EkfInstance::random_x(n, rng);
    const Vec th = testutil::EkfInstance::random_theta(rng);
    worst = std::max(worst, testutil::ekf_partial_error(e, x, th));
  }
  return {worst < 1e-5, "max rel err " + fmt("%.2e", worst) + " over 100 instances"};
}

Outcome kernel_calibration() {
  struct Case {
    std::string name;
    mcmc::Target target;
    int dim;
    bool exp_space;  // compare exp(eta) with the Gamma moments
    double mean, var;
  };
  const double shape = 3.0, rate = 2.0;
  const std::vector<Case> cases = {
      {"normal", testutil::standard_normal_target(), 2, false, 0.0, 1.0},
      {"log-gamma", testutil::log_gamma_target(shape, rate), 1, true, shape / rate, shape / (rate * rate)}};
  struct Kernel {
    std::string name;
    mcmc::SamplerConfig config;
  };
  std::vector<Kernel> kernels(4);
  kernels[0] = {"nuts", {}};
  kernels[0].config.kernel = mcmc::KernelKind::Nuts;
  kernels[1] = {"hmc5", {}};
  kernels[1].config.kernel = mcmc::KernelKind::Hmc;
  kernels[1].config.leapfrog_steps = 5;
  kernels[2] = {"mala", {}};
  kernels[2].config.kernel = mcmc::KernelKind::Mala;
  kernels[3] = {"rhmc", {}};
  kernels[3].config.kernel = mcmc::KernelKind::Rhmc;

  // find_reasonable_epsilon started at a Gaussian mode always lands on the
  // leapfrog stability limit (eps = 2 for unit variance), where HMC(L=5)
  // barely moves, so the leapfrog kernels use a fixed step here. MALA keeps
  // its tuned scale.
  for (int k : {0, 1, 3}) kernels[k].config.epsilon = 0.5;
  const int burn = 1000, draws = 10000;
  bool pass = true;
  double worst = 0.0;
  std::string worst_where;
  std::uint64_t seed = 500;
  for (const Case& c : cases) {
    for (Kernel k : kernels) {
      k.config.iterations = burn + draws;
      const mcmc::Chain chain = mcmc::run_chain(c.target, VectorXd::Zero(c.dim), k.config, ++seed, {});
      const MatrixXd d = chain.samples(burn);
      for (int j = 0; j < c.dim; ++j) {
        std::vector<double> x(d.rows());
        for (Eigen::Index i = 0; i < d.rows(); ++i) x[i] = c.exp_space ? std::exp(d(i, j)) : d(i, j);
        const Moments mo = moments(x);
        const double zm = std::abs(mo.mean - c.mean) / mo.mean_mcse;
        const double zv = std::abs(mo.var - c.var) / mo.var_mcse;
        for (double zz : {zm, zv}) {
          if (zz > worst) {
            worst = zz;
            worst_where = k.name + "/" + c.name;
          }
        }
        pass = pass && zm <= 3.0 && zv <= 3.0;
      }
    }
  }
  return {pass, "worst |error|/MCSE " + fmt("%.2f", worst) + " (" + worst_where + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradpf acceptance suite"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all = {
      {1, "FD gradient correctness, resampling disabled", gradient_correctness},
      {2, "random-walk PF loglik vs Kalman over 50 grid points", exact_filter_equivalence},
      {3, "piecewise continuity under CRN vs fresh multinomial noise", piecewise_continuity},
      {4, "resampling conservation invariants", conservation},
      {5, "LGSS NUTS recovery over 10 seeds", lgss_nuts_recovery},
      {6, "Gelman-Rubin over 3 LGSS NUTS chains", gelman_rubin},
      {7, "SV sampler ESS ordering and NUTS coverage", sampler_ordering},
      {8, "Lorenz-63 CRN vs Gumbel-softmax vs soft resampling", lorenz_desk_check},
      {9, "EKF proposal derivative suite", ekf_derivative_suite},
      {10, "MCMC kernel calibration on closed-form targets", kernel_calibration},
  };
  int failures = 0;
  for (const Criterion& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.title << " ("
              << o.measured << ") " << fmt("%.1f", secs) << "s" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
