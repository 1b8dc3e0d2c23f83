#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gradpf/diagnostics.hpp"
#include "gradpf/filter.hpp"
#include "gradpf/gaussian.hpp"
#include "gradpf/kalman.hpp"
#include "gradpf/mcmc.hpp"
#include "gradpf/model.hpp"

namespace py = pybind11;
using namespace gradpf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Vec small(const VectorXd& v) {
  if (v.size() < 1 || v.size() > kMaxDim) throw DimensionError("vector dimension must be in [1, 4]");
  return Vec(v);
}

Mat small(const MatrixXd& m) {
  if (m.rows() < 1 || m.cols() < 1 || m.rows() > kMaxDim || m.cols() > kMaxDim) {
    throw DimensionError("matrix dimensions must be in [1, 4]");
  }
  return Mat(m);
}

// Rows of a T x n_y array become observation vectors.
std::vector<Vec> rows_of(const MatrixXd& y) {
  std::vector<Vec> out;
  out.reserve(y.rows());
  for (Eigen::Index t = 0; t < y.rows(); ++t) out.push_back(small(VectorXd(y.row(t).transpose())));
  return out;
}

MatrixXd stack(const std::vector<Vec>& v) {
  if (v.empty()) return MatrixXd();
  MatrixXd m(static_cast<Eigen::Index>(v.size()), v.front().size());
  for (std::size_t t = 0; t < v.size(); ++t) m.row(static_cast<Eigen::Index>(t)) = v[t].transpose();
  return m;
}

dpf::FilterConfig filter_config(int particles, const std::string& resampler, double alpha,
                                double lambda, double ess_threshold, const std::string& gradient) {
  dpf::FilterConfig c;
  c.particles = particles;
  c.resampler.kind = dpf::parse_resampler(resampler);
  c.resampler.alpha = alpha;
  c.resampler.lambda = lambda;
  c.ess_threshold = ess_threshold;
  c.gradient = dpf::parse_gradient_estimator(gradient);
  c.validate();
  return c;
}

ssm::ProposalPolicy policy_or(const std::string& text, ssm::ProposalPolicy fallback) {
  return text.empty() ? fallback : ssm::parse_proposal_policy(text);
}

}  // namespace

PYBIND11_MODULE(_gradpf, m) {
  m.doc() = "Differentiable particle filtering and gradient-based particle MCMC";

  py::register_exception<Error>(m, "GradpfError", PyExc_RuntimeError);

  py::class_<ssm::Model>(m, "Model")
      .def_property_readonly("kind", [](const ssm::Model& s) { return std::string(ssm::to_string(s.kind())); })
      .def_property_readonly("proposal", [](const ssm::Model& s) { return std::string(ssm::to_string(s.policy())); })
      .def_property_readonly("state_dim", &ssm::Model::state_dim)
      .def_property_readonly("obs_dim", &ssm::Model::obs_dim)
      .def_property_readonly("param_dim", &ssm::Model::param_dim)
      .def_property_readonly("param_names", &ssm::Model::param_names)
      .def("with_proposal", [](const ssm::Model& s, const std::string& p) {
        return s.with_policy(ssm::parse_proposal_policy(p));
      })
      .def("generate", [](const ssm::Model& s, const VectorXd& theta, int steps, std::uint64_t seed) {
        const ssm::Simulation sim = s.generate(small(theta), steps, seed);
        return py::make_tuple(stack(sim.states), stack(sim.observations));
      }, py::arg("theta"), py::arg("T"), py::arg("seed"));

  m.def("random_walk", [](double obs_var, const std::string& proposal) {
    return ssm::Model::random_walk(obs_var, policy_or(proposal, ssm::ProposalPolicy::Ekf));
  }, py::arg("obs_var") = 1.0, py::arg("proposal") = "");
  m.def("lgss", [](const std::string& proposal) {
    return ssm::Model::lgss(policy_or(proposal, ssm::ProposalPolicy::Optimal));
  }, py::arg("proposal") = "");
  m.def("stochastic_volatility", [](const std::string& proposal) {
    return ssm::Model::stochastic_volatility(policy_or(proposal, ssm::ProposalPolicy::Prior));
  }, py::arg("proposal") = "");
  m.def("lorenz63", [](int observed, bool estimate_obs_noise, double obs_noise) {
    ssm::Lorenz63Options o;
    o.observed = observed;
    o.estimate_obs_noise = estimate_obs_noise;
    o.obs_noise = obs_noise;
    return ssm::Model::lorenz63(o);
  }, py::arg("observed") = 2, py::arg("estimate_obs_noise") = false, py::arg("obs_noise") = 1.2);

  m.def("log_normal", [](const VectorXd& x, const VectorXd& mu, const MatrixXd& c) {
    return gauss::log_normal(small(x), small(mu), small(c));
  });
  m.def("dlog_normal", [](const VectorXd& x, const VectorXd& mu, const MatrixXd& c) {
    const gauss::LogNormalGrad g = gauss::dlog_normal(small(x), small(mu), small(c));
    return py::make_tuple(VectorXd(g.dx), VectorXd(g.dmu), MatrixXd(g.dcov));
  });
  m.def("inv_derivative", [](const MatrixXd& u, const MatrixXd& du) {
    return MatrixXd(gauss::inv_derivative(small(u), small(du)));
  });
  m.def("spd_sqrt", [](const MatrixXd& c) { return MatrixXd(gauss::spd_sqrt(small(c))); });
  m.def("sqrtm_derivative", [](const MatrixXd& a, const MatrixXd& dc) {
    return MatrixXd(gauss::sqrtm_derivative(small(a), small(dc)));
  });

  m.def("kf_loglik", [](const ssm::Model& s, const MatrixXd& y, const VectorXd& theta) {
    return kalman::kf_loglik(s, rows_of(y), small(theta));
  });
  m.def("kf_loglik_grad", [](const ssm::Model& s, const MatrixXd& y, const VectorXd& theta) {
    return VectorXd(kalman::kf_loglik_grad(s, rows_of(y), small(theta)));
  });

  m.def("run_filter",
        [](const ssm::Model& s, const VectorXd& theta, const MatrixXd& y, int particles,
           std::uint64_t seed, const std::string& resampler, double alpha, double lambda,
           double ess_threshold, const std::string& gradient) {
          const auto obs = rows_of(y);
          const dpf::FilterConfig c =
              filter_config(particles, resampler, alpha, lambda, ess_threshold, gradient);
          const dpf::NoiseBank bank(seed, static_cast<int>(obs.size()), particles, s.state_dim());
          const dpf::FilterOutput out = dpf::run_filter(s, small(theta), obs, c, bank);
          py::dict d;
          d["loglik"] = out.loglik;
          d["grad"] = VectorXd(out.dloglik_dtheta);
          std::vector<double> ess;
          std::vector<bool> flags;
          std::vector<std::vector<int>> ancestry;
          for (const auto& st : out.trace) {
            ess.push_back(st.ess);
            flags.push_back(st.resampled);
            ancestry.push_back(st.ancestry);
          }
          d["ess_trace"] = ess;
          d["resample_flags"] = flags;
          d["ancestry"] = ancestry;
          d["ancestry_signature"] = out.ancestry_signature();
          return d;
        },
        py::arg("model"), py::arg("theta"), py::arg("y"), py::arg("particles") = 100,
        py::arg("seed") = 1, py::arg("resampler") = "crn", py::arg("alpha") = 0.5,
        py::arg("lam") = 0.5, py::arg("ess_threshold") = 0.5, py::arg("gradient") = "reparam");

  m.def("sample",
        [](const ssm::Model& s, const MatrixXd& y, const VectorXd& theta0, int iterations,
           const std::string& kernel, int particles, std::uint64_t seed, double epsilon, int L,
           double gamma) {
          const auto obs = rows_of(y);
          const dpf::FilterConfig c = filter_config(particles, "crn", 0.5, 0.5, 0.5, "reparam");
          const dpf::NoiseBank bank(seed, static_cast<int>(obs.size()), particles, s.state_dim());
          mcmc::FilterPosterior post(s, obs, mcmc::Prior::defaults(s), c, bank);
          mcmc::SamplerConfig sc;
          sc.kernel = mcmc::parse_kernel(kernel);
          sc.iterations = iterations;
          sc.epsilon = epsilon;
          sc.leapfrog_steps = L;
          sc.gamma = gamma;
          mcmc::ChainOptions opts;
          opts.constraints = s.constraints();
          const mcmc::Target target = [&post](const VectorXd& eta) { return post(eta); };
          const mcmc::Chain chain = mcmc::run_chain(
              target, mcmc::to_unconstrained(s.constraints(), theta0), sc, seed, opts);
          MatrixXd theta(chain.rows.size(), theta0.size());
          std::vector<bool> accepted;
          std::vector<int> nge;
          for (std::size_t i = 0; i < chain.rows.size(); ++i) {
            theta.row(static_cast<Eigen::Index>(i)) = chain.rows[i].theta.transpose();
            accepted.push_back(chain.rows[i].accepted);
            nge.push_back(chain.rows[i].nge);
          }
          py::dict d;
          d["theta"] = theta;
          d["accepted"] = accepted;
          d["nge"] = nge;
          d["step_size"] = chain.epsilon;
          d["acc_rate"] = chain.acceptance_rate();
          return d;
        },
        py::arg("model"), py::arg("y"), py::arg("theta0"), py::arg("iterations"),
        py::arg("kernel") = "nuts", py::arg("particles") = 100, py::arg("seed") = 1,
        py::arg("epsilon") = 0.0, py::arg("L") = 1, py::arg("gamma") = 0.0);

  m.def("acf", [](const std::vector<double>& x, int max_lag) { return diag::acf(x, max_lag); });
  m.def("iact", [](const std::vector<double>& x, int max_lag) { return diag::iact(x, max_lag); },
        py::arg("x"), py::arg("max_lag") = 100);
  m.def("ess", [](const std::vector<double>& x, int max_lag) { return diag::ess(x, max_lag); },
        py::arg("x"), py::arg("max_lag") = 100);
  m.def("gelman_rubin", [](const std::vector<MatrixXd>& chains, int component) {
    return diag::gelman_rubin(chains, component);
  });
  m.def("mse", [](const MatrixXd& samples, const VectorXd& truth) { return diag::mse(samples, truth); });
}
