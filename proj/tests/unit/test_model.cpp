#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradpf/model.hpp"
#include "test_util.hpp"

using namespace gradpf;
using namespace testutil;
using ssm::Model;
using ssm::ProposalPolicy;

namespace {

constexpr double kTol = 1e-5;

Vec theta_for(const Model& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 1.5);
  std::uniform_real_distribution<double> phi(-0.9, 0.9);
  switch (m.kind()) {
    case ssm::ModelKind::RandomWalk: return Vec::Constant(1, u(rng));
    case ssm::ModelKind::Lgss: {
      Vec t(3);
      t << phi(rng), u(rng), u(rng);
      return t;
    }
    case ssm::ModelKind::StochasticVolatility: {
      Vec t(3);
      t << phi(rng), phi(rng), u(rng);
      return t;
    }
    case ssm::ModelKind::Lorenz63: {
      Vec t(m.param_dim());
      for (int j = 0; j < m.param_dim(); ++j) t(j) = u(rng);
      return t;
    }
  }
  return {};
}

Vec perturb(const Vec& v, int k, double h) {
  Vec z = v;
  z(k) += h;
  return z;
}

// Checks value/derivative pairs of a spec-producing function against central differences.
template <typename Spec, typename F, typename Getters>
void check_partials(F f, const Vec& x, const Vec& theta, Getters getters) {
  const Spec s = f(x, theta);
  for (const auto& g : getters) {
    for (int k = 0; k < x.size(); ++k) {
      const Mat num = fd_mat([&](double h) { return g.value(f(perturb(x, k, h), theta)); }, 0.0);
      CHECK_MESSAGE(close(g.dx(s, k), num, kTol), g.name << " d/dx_" << k);
    }
    for (int j = 0; j < theta.size(); ++j) {
      const Mat num = fd_mat([&](double h) { return g.value(f(x, perturb(theta, j, h))); }, 0.0);
      CHECK_MESSAGE(close(g.dtheta(s, j), num, kTol), g.name << " d/dtheta_" << j);
    }
  }
}

template <typename Spec>
struct Getter {
  const char* name;
  std::function<Mat(const Spec&)> value;
  std::function<Mat(const Spec&, int)> dx;
  std::function<Mat(const Spec&, int)> dtheta;
};

void check_model_partials(const Model& m, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  using T = ssm::TransitionSpec;
  using O = ssm::ObservationSpec;
  using P = ssm::ProposalSpec;
  const std::vector<Getter<T>> tg = {
      {"a", [](const T& s) { return Mat(s.a); }, [](const T& s, int k) { return Mat(s.da_dx.col(k)); },
       [](const T& s, int j) { return Mat(s.da_dtheta.col(j)); }},
      {"sigma", [](const T& s) { return s.sigma; }, [](const T& s, int k) { return s.dsigma_dx[k]; },
       [](const T& s, int j) { return s.dsigma_dtheta[j]; }}};
  const std::vector<Getter<O>> og = {
      {"h", [](const O& s) { return Mat(s.h); }, [](const O& s, int k) { return Mat(s.dh_dx.col(k)); },
       [](const O& s, int j) { return Mat(s.dh_dtheta.col(j)); }},
      {"R", [](const O& s) { return s.r; }, [](const O& s, int k) { return s.dr_dx[k]; },
       [](const O& s, int j) { return s.dr_dtheta[j]; }}};
  const std::vector<Getter<P>> pg = {
      {"mu", [](const P& s) { return Mat(s.mu); }, [](const P& s, int k) { return Mat(s.dmu_dx.col(k)); },
       [](const P& s, int j) { return Mat(s.dmu_dtheta.col(j)); }},
      {"C", [](const P& s) { return s.c; }, [](const P& s, int k) { return s.dc_dx[k]; },
       [](const P& s, int j) { return s.dc_dtheta[j]; }}};
  for (int trial = 0; trial < trials; ++trial) {
    const Vec theta = theta_for(m, rng);
    const Vec x = random_vec(m.state_dim(), rng, m.kind() == ssm::ModelKind::Lorenz63 ? 5.0 : 1.0);
    const Vec y = random_vec(m.obs_dim(), rng);
    check_partials<T>([&](const Vec& a, const Vec& b) { return m.transition(a, b); }, x, theta, tg);
    check_partials<O>([&](const Vec& a, const Vec& b) { return m.observation(a, b); }, x, theta, og);
    check_partials<P>([&](const Vec& a, const Vec& b) { return m.proposal(a, b, y); }, x, theta, pg);
  }
}

}  // namespace

TEST_SUITE("ssm") {

TEST_CASE("lgss transition and observation examples") {
  const Model m = Model::lgss();
  Vec th(3);
  th << 0.5, 1.0, 1.0;
  const auto t = m.transition(Vec::Constant(1, 2.0), th);
  CHECK(t.a(0) == 1.0);
  CHECK(t.sigma(0, 0) == 1.0);
  CHECK(t.da_dx(0, 0) == 0.5);
  CHECK(t.da_dtheta(0, 0) == 2.0);
  CHECK(t.da_dtheta(0, 1) == 0.0);
  CHECK(t.da_dtheta(0, 2) == 0.0);
  CHECK(t.dsigma_dtheta[1](0, 0) == 2.0);

  Vec th2(3);
  th2 << 0.5, 1.0, 2.0;
  const auto o = m.observation(Vec::Constant(1, 3.0), th2);
  CHECK(o.h(0) == 3.0);
  CHECK(o.r(0, 0) == 4.0);
  CHECK(o.dh_dx(0, 0) == 1.0);
  CHECK(o.dr_dtheta[2](0, 0) == 4.0);
}

TEST_CASE("sv transition at the mean and observation at zero") {
  const Model m = Model::stochastic_volatility();
  Vec th(3);
  th << -0.2, 0.95, 0.2;
  const auto t = m.transition(Vec::Constant(1, -0.2), th);
  CHECK(t.a(0) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(t.da_dtheta(0, 1) == 0.0);
  const auto o = m.observation(Vec::Zero(1), th);
  CHECK(o.h(0) == 0.0);
  CHECK(o.r(0, 0) == 1.0);
  CHECK(o.dr_dx[0](0, 0) == 1.0);
  CHECK(o.r_depends_on_x);
}

TEST_CASE("lorenz observation selects the first components") {
  const Model m = Model::lorenz63();
  Vec x(3);
  x << 1.0, 2.0, 3.0;
  const auto o = m.observation(x, Vec::Constant(1, 1.2));
  REQUIRE(o.h.size() == 2);
  CHECK(o.h(0) == 1.0);
  CHECK(o.h(1) == 2.0);
  Mat expected = Mat::Zero(2, 3);
  expected(0, 0) = expected(1, 1) = 1.0;
  CHECK(o.dh_dx == expected);
  CHECK(o.r(0, 0) == doctest::Approx(1.44));
}

TEST_CASE("lorenz RK4 Jacobian matches finite differences") {
  const Model m = Model::lorenz63();
  const Vec x = Vec::Ones(3);
  const auto t = m.transition(x, Vec::Constant(1, 1.0));
  for (int k = 0; k < 3; ++k) {
    const Mat num = fd_mat([&](double h) { return Mat(m.transition(perturb(x, k, h), Vec::Constant(1, 1.0)).a); }, 0.0);
    CHECK(close(Mat(t.da_dx.col(k)), num, 1e-5));
  }
}

TEST_CASE("lorenz RK4 converges at fourth order") {
  const ssm::Lorenz63Options o;
  Vec x(3);
  x << 1.0, 1.0, 1.0;
  const double dt = 0.05;
  const Vec ref = ssm::lorenz_flow(x, o, 4000, dt).x;
  const double e1 = (ssm::lorenz_flow(x, o, 10, dt).x - ref).norm();
  const double e2 = (ssm::lorenz_flow(x, o, 20, dt).x - ref).norm();
  const double ratio = e1 / e2;
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("lorenz blow-up raises a divergence error with the time index") {
  ssm::Lorenz63Options o;
  o.substeps = 1;
  o.dt = 5.0;
  const Model m = Model::lorenz63(o);
  CHECK_THROWS_AS(m.generate(Vec::Constant(1, 1.0), 50, 1), DivergenceError);
}

TEST_CASE("lgss optimal proposal examples") {
  const Model m = Model::lgss(ProposalPolicy::Optimal);
  Vec th(3);
  th << 0.7, 1.0, 1.0;
  const auto p = m.proposal(Vec::Zero(1), th, Vec::Zero(1));
  CHECK(p.c(0, 0) == doctest::Approx(0.5));
  CHECK(p.mu(0) == 0.0);
  CHECK(m.incremental_weight_kind() == ssm::WeightKind::Predictive);
  const auto pred = m.predictive(Vec::Constant(1, 2.0), th);
  CHECK(pred.mean(0) == doctest::Approx(1.4));
  CHECK(pred.cov(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("prior proposal equals the transition field for field") {
  const Model m = Model::stochastic_volatility(ProposalPolicy::Prior);
  Vec th(3);
  th << -0.2, 0.95, 0.2;
  const Vec x = Vec::Constant(1, -0.2);
  const auto t = m.transition(x, th);
  const auto p = m.proposal(x, th, Vec::Constant(1, 0.3));
  CHECK(p.mu == t.a);
  CHECK(p.c == t.sigma);
  CHECK(p.dmu_dx == t.da_dx);
  CHECK(p.dmu_dtheta == t.da_dtheta);
  for (int j = 0; j < 3; ++j) CHECK(p.dc_dtheta[j] == t.dsigma_dtheta[j]);
  CHECK(m.incremental_weight_kind() == ssm::WeightKind::LikelihoodAtNewState);
  CHECK(Model::random_walk().incremental_weight_kind() == ssm::WeightKind::FullRatio);
}

TEST_CASE("scalar specs reproduce the general specs") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::vector<Model> models = {
      Model::random_walk(0.8, ProposalPolicy::Prior), Model::random_walk(0.8, ProposalPolicy::Ekf),
      Model::lgss(ProposalPolicy::Prior),             Model::lgss(ProposalPolicy::Optimal),
      Model::lgss(ProposalPolicy::Ekf),               Model::stochastic_volatility()};
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  for (const Model& m : models) {
    CHECK(m.is_scalar());
    for (int rep = 0; rep < 20; ++rep) {
      const Vec th = theta_for(m, rng);
      const double x = z(rng), y = z(rng);
      const Vec xv = Vec::Constant(1, x), yv = Vec::Constant(1, y);
      const int nt = m.param_dim();

      const auto st = m.scalar_transition(x, th);
      const auto gt = m.transition(xv, th);
      CHECK(same(st.m, gt.a(0)));
      CHECK(same(st.v, gt.sigma(0, 0)));
      CHECK(same(st.dm_dx, gt.da_dx(0, 0)));
      for (int j = 0; j < nt; ++j) {
        CHECK(same(st.dm_dtheta[j], gt.da_dtheta(0, j)));
        CHECK(same(st.dv_dtheta[j], gt.dsigma_dtheta[j](0, 0)));
      }

      const auto so = m.scalar_observation(x, th);
      const auto go = m.observation(xv, th);
      CHECK(same(so.m, go.h(0)));
      CHECK(same(so.v, go.r(0, 0)));
      CHECK(same(so.dm_dx, go.dh_dx(0, 0)));
      CHECK(same(so.dv_dx, go.r_depends_on_x ? go.dr_dx[0](0, 0) : 0.0));
      CHECK(same(so.d2m_dx2, go.d2h_dx2[0](0, 0)));
      for (int j = 0; j < nt; ++j) {
        CHECK(same(so.dm_dtheta[j], go.dh_dtheta(0, j)));
        CHECK(same(so.dv_dtheta[j], go.dr_dtheta[j](0, 0)));
        CHECK(same(so.d2m_dxdtheta[j], go.d2h_dxdtheta[0](0, j)));
      }

      const auto sp = m.scalar_proposal(x, th, y);
      const auto gp = m.proposal(xv, th, yv);
      CHECK(same(sp.m, gp.mu(0)));
      CHECK(same(sp.v, gp.c(0, 0)));
      CHECK(same(sp.dm_dx, gp.dmu_dx(0, 0)));
      CHECK(same(sp.v_depends_on_x ? sp.dv_dx : 0.0, gp.c_depends_on_x ? gp.dc_dx[0](0, 0) : 0.0));
      for (int j = 0; j < nt; ++j) {
        CHECK(same(sp.dm_dtheta[j], gp.dmu_dtheta(0, j)));
        CHECK(same(sp.dv_dtheta[j], gp.dc_dtheta[j](0, 0)));
      }

      if (m.incremental_weight_kind() == ssm::WeightKind::Predictive) {
        const auto sq = m.scalar_predictive(x, th);
        const auto gq = m.predictive(xv, th);
        CHECK(same(sq.m, gq.mean(0)));
        CHECK(same(sq.v, gq.cov(0, 0)));
        CHECK(same(sq.dm_dx, gq.dmean_dx(0, 0)));
        for (int j = 0; j < nt; ++j) {
          CHECK(same(sq.dm_dtheta[j], gq.dmean_dtheta(0, j)));
          CHECK(same(sq.dv_dtheta[j], gq.dcov_dtheta[j](0, 0)));
        }
      }
    }
  }
  ssm::Lorenz63Options one;
  one.observed = 1;
  CHECK_FALSE(Model::lorenz63(one).is_scalar());
  CHECK_THROWS_AS(Model::lorenz63(one).scalar_transition(0.0, Vec::Ones(1)), DimensionError);
}

TEST_CASE("unsupported proposal policies are rejected") {
  CHECK_THROWS_AS(Model::stochastic_volatility(ProposalPolicy::Optimal), ConfigError);
  CHECK_THROWS_AS(Model::lorenz63({}, ProposalPolicy::Ekf), ConfigError);
  CHECK_THROWS_AS(Model::random_walk(1.0, ProposalPolicy::Optimal), ConfigError);
  CHECK_THROWS_AS(ssm::parse_model_kind("arma"), ConfigError);
}

TEST_CASE("every model partial matches finite differences") {
  SUBCASE("randomwalk ekf") { check_model_partials(Model::random_walk(), 20, 1); }
  SUBCASE("lgss optimal") { check_model_partials(Model::lgss(), 20, 2); }
  SUBCASE("lgss ekf") { check_model_partials(Model::lgss(ProposalPolicy::Ekf), 20, 3); }
  SUBCASE("lgss prior") { check_model_partials(Model::lgss(ProposalPolicy::Prior), 20, 4); }
  SUBCASE("sv prior") { check_model_partials(Model::stochastic_volatility(), 20, 5); }
  SUBCASE("lorenz63 sigma_q") { check_model_partials(Model::lorenz63(), 5, 6); }
  SUBCASE("lorenz63 sigma_q, sigma_r") {
    ssm::Lorenz63Options o;
    o.estimate_obs_noise = true;
    check_model_partials(Model::lorenz63(o), 5, 7);
  }
}

TEST_CASE("sv initial state derivative matches finite differences") {
  const Model m = Model::stochastic_volatility();
  Vec th(3);
  th << -0.2, 0.95, 0.2;
  const Vec eps = Vec::Constant(1, 0.8);
  const auto s = m.initial(th, eps);
  for (int j = 0; j < 3; ++j) {
    const double num = fd([&](double h) { return m.initial(perturb(th, j, h), eps).x(0); }, 0.0);
    CHECK(close(s.dx_dtheta(0, j), num, 1e-6));
  }
  Vec bad = th;
  bad(1) = 1.0;
  CHECK_THROWS_AS(m.initial(bad, eps), DomainError);
}

TEST_CASE("generate is reproducible and matches the stationary variance") {
  const Model m = Model::lgss();
  Vec th(3);
  th << 0.7, 1.2, 1.0;
  const auto a = m.generate(th, 100, 42);
  const auto b = m.generate(th, 100, 42);
  const auto c = m.generate(th, 100, 43);
  REQUIRE(a.states.size() == 100);
  for (int t = 0; t < 100; ++t) {
    CHECK(a.states[t] == b.states[t]);
    CHECK(a.observations[t] == b.observations[t]);
  }
  bool differ = false;
  for (int t = 0; t < 100; ++t) differ = differ || a.observations[t] != c.observations[t];
  CHECK(differ);

  // Long run for the moment check: var x = sigma_v^2 / (1 - phi^2).
  const auto l = m.generate(th, 20000, 7);
  double mean = 0.0, sq = 0.0;
  for (const auto& x : l.states) mean += x(0);
  mean /= l.states.size();
  for (const auto& x : l.states) sq += (x(0) - mean) * (x(0) - mean);
  const double var = sq / (l.states.size() - 1);
  const double target = 1.44 / (1.0 - 0.49);
  // AR(1) sample variance has standard error about target * sqrt(2 (1 + phi^2) / (n (1 - phi^2))).
  const double se = target * std::sqrt(2.0 * (1.0 + 0.49) / (20000.0 * (1.0 - 0.49)));
  CHECK(std::abs(var - target) < 3.0 * se);

  const auto one = m.generate(th, 1, 1);
  CHECK(one.states.size() == 1);
  CHECK(one.observations.size() == 1);
}

TEST_CASE("sv initial state is stationary") {
  const Model m = Model::stochastic_volatility();
  Vec th(3);
  th << -0.2, 0.95, 0.2;
  const auto d = m.initial_density(th);
  CHECK(d.mean(0) == doctest::Approx(-0.2));
  CHECK(d.cov(0, 0) == doctest::Approx(0.04 / (1.0 - 0.9025)));
  for (int j = 0; j < 3; ++j) {
    const double dm = fd([&](double h) { return m.initial_density(perturb(th, j, h)).mean(0); }, 0.0);
    const double dc = fd([&](double h) { return m.initial_density(perturb(th, j, h)).cov(0, 0); }, 0.0);
    CHECK(close(d.dmean_dtheta(0, j), dm, 1e-6));
    CHECK(close(d.dcov_dtheta[j](0, 0), dc, 1e-5));
  }
  const Vec eps = Vec::Constant(1, 1.5);
  CHECK(m.initial(th, eps).x(0) == doctest::Approx(d.mean(0) + std::sqrt(d.cov(0, 0)) * 1.5));
  CHECK_THROWS_AS(Model::lgss().initial_density(th), ConfigError);
}

TEST_CASE("check_theta enforces dimension and positivity") {
  const Model m = Model::lgss();
  CHECK_THROWS_AS(m.check_theta(Vec::Ones(2)), DimensionError);
  Vec th(3);
  th << 0.5, -1.0, 1.0;
  CHECK_THROWS_AS(m.check_theta(th), DomainError);
}

}
