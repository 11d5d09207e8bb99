#include "doctest.h"

#include <cmath>
#include <limits>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/testbed.hpp"

using namespace calibr8;

namespace {

struct Setup {
  testbed::TestProblem p;
  Ensemble initial;
  Emulator emulator;
};

Setup make_setup(testbed::TestProblem p, std::size_t n, std::uint64_t seed) {
  Matrix design = build_design(p.space, n, DesignMethod::latin_hypercube, seed);
  Ensemble e = run_ensemble(p.simulator, design, p.observations.control, seed);
  Matrix Y(e.size(), static_cast<Eigen::Index>(p.observations.size()));
  for (Eigen::Index i = 0; i < Y.rows(); ++i)
    Y.row(i) = apply_operator(p.observations.op, e.outputs.row(i).transpose()).transpose();
  Emulator em = Emulator::fit(e.inputs, Y);
  p.simulator.reset_evaluations();
  return {std::move(p), std::move(e), std::move(em)};
}

MhOptions mh_opts(double sd, std::size_t n_iter, std::uint64_t seed) {
  MhOptions o;
  o.proposal_sd = Vector::Constant(1, sd);
  o.n_iter = n_iter;
  o.burn_in = n_iter / 5;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("infinite threshold is plain MH on the surrogate likelihood") {
  Setup s = make_setup(testbed::make_linear_gaussian(1.0), 8, 3);
  SurrogateMhOptions o;
  o.mh = mh_opts(1.0, 3000, 7);
  o.variance_threshold = std::numeric_limits<double>::infinity();
  SurrogateMhResult r = surrogate_mh(s.p.simulator, s.emulator, s.initial, s.p.observations, s.p.space, o);
  CHECK(r.sim_calls == 0);
  CHECK(s.p.simulator.evaluations() == 0);
  CHECK(r.ensemble.size() == s.initial.size());

  const Emulator em = s.emulator;
  const ObservationSet obs = s.p.observations;
  const ParameterSpace space = s.p.space;
  LogDensity lp = [&](const Vector& x) {
    double v = space.log_prior(x);
    if (!std::isfinite(v)) return v;
    Vector m, var;
    em.predict(x, m, var);
    return v + surrogate_log_likelihood(obs, m, var);
  };
  Chain ref = metropolis_hastings(lp, space, o.mh);
  CHECK(r.chain.states == ref.states);
  CHECK(r.chain.log_post == ref.log_post);
}

TEST_CASE("zero threshold is plain MH on the exact posterior") {
  Setup s = make_setup(testbed::make_linear_gaussian(1.0), 8, 3);
  SurrogateMhOptions o;
  o.mh = mh_opts(1.0, 20000, 11);
  o.variance_threshold = 0.0;
  SurrogateMhResult r = surrogate_mh(s.p.simulator, s.emulator, s.initial, s.p.observations, s.p.space, o);
  LogDensity exact = make_log_posterior(s.p.simulator.detached(), s.p.observations, s.p.space);
  Chain ref = metropolis_hastings(exact, s.p.space, o.mh);
  CHECK(r.chain.states == ref.states);
  CHECK(r.sim_calls == r.chain.n_sim_evals);
  CHECK(r.sim_calls == s.p.simulator.evaluations());
  CHECK(r.ensemble.size() == s.initial.size() + r.sim_calls);

  Vector series = r.chain.states.col(0);
  double se = series_mcse(series);
  CHECK(std::abs(r.chain.mean()[0] - 0.5) < 3 * se);
}

TEST_CASE("monotone map: few simulator calls and the right posterior") {
  Setup s = make_setup(testbed::make_monotone_1d(), 4, 5);
  const double sigma = 0.1, y = 2.0;
  auto post = [&](double x) {
    double r = y - testbed::monotone_f(x);
    return std::exp(-0.5 * r * r / (sigma * sigma));
  };
  double z = testbed::simpson(post, -2, 2, 40000);
  double m = testbed::simpson([&](double x) { return x * post(x); }, -2, 2, 40000) / z;

  SurrogateMhOptions o;
  o.mh = mh_opts(0.02, 10000, 13);
  o.mh.start = Vector::Constant(1, 0.9);
  SurrogateMhResult r = surrogate_mh(s.p.simulator, s.emulator, s.initial, s.p.observations, s.p.space, o);
  MESSAGE("sim calls " << r.sim_calls << " mean " << r.chain.mean()[0] << " oracle " << m);
  CHECK(r.sim_calls < o.mh.n_iter / 4);
  CHECK(r.sim_calls > 0);
  CHECK_FALSE(r.fell_back);
  Vector series = r.chain.states.col(0);
  CHECK(std::abs(r.chain.mean()[0] - m) < 3 * series_mcse(series));
  CHECK(r.emulator.training_size() == s.initial.size() + r.sim_calls);
}

TEST_CASE("surrogate likelihood and score variance") {
  ObservationSet obs;
  obs.y = Vector::Constant(2, 1.0);
  obs.model = ObservationModel::gaussian(0.5);
  obs.validate();
  Vector mean(2), var = Vector::Zero(2);
  mean << 0.0, 1.0;
  CHECK(surrogate_log_likelihood(obs, mean, var) == doctest::Approx(log_likelihood(obs, mean)).epsilon(1e-12));
  CHECK(score_variance(obs, mean, var) == 0.0);
  var << 0.1, 0.0;
  // r^2 v / s^4 + v^2 / (2 s^4) on the first output
  CHECK(score_variance(obs, mean, var) == doctest::Approx((0.1 + 0.005) / 0.0625).epsilon(1e-12));
  ObservationSet t = obs;
  t.model = ObservationModel::student(Vector::Constant(1, 0.5), 5.0);
  t.validate();
  CHECK_THROWS_AS(score_variance(t, mean, var), ParameterError);
}

TEST_CASE("surrogate_mh validation") {
  Setup s = make_setup(testbed::make_linear_gaussian(1.0), 8, 3);
  SurrogateMhOptions o;
  o.mh = mh_opts(1.0, 100, 1);
  Ensemble empty;
  CHECK_THROWS_AS(surrogate_mh(s.p.simulator, s.emulator, empty, s.p.observations, s.p.space, o), ParameterError);
  o.variance_threshold = std::nan("");
  CHECK_THROWS_AS(surrogate_mh(s.p.simulator, s.emulator, s.initial, s.p.observations, s.p.space, o), ParameterError);
  o.variance_threshold = 1.0;
  ObservationSet two = s.p.observations;
  two.y = Vector::Constant(2, 1.0);
  CHECK_THROWS_AS(surrogate_mh(s.p.simulator, s.emulator, s.initial, two, s.p.space, o), ParameterError);
}
