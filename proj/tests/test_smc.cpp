#include "doctest.h"

#include <cmath>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/testbed.hpp"
#include "helpers.hpp"

using namespace calibr8;

namespace {

LogDensity log_lik_of(const testbed::TestProblem& p) {
  return [p](const Vector& x) {
    return log_likelihood(p.observations, apply_operator(p.observations.op, evaluate(p.simulator, x, {}, 0)));
  };
}

double positive_mass(const ParticleSet& s) {
  double m = 0;
  for (Eigen::Index i = 0; i < s.points.rows(); ++i)
    if (s.points(i, 0) > 0) m += s.weights[i];
  return m;
}

}  // namespace

TEST_CASE("flat likelihood in one stage gives uniform weights") {
  auto p = testbed::make_linear_gaussian();
  SmcOptions o;
  o.n_particles = 500;
  o.adaptive = false;
  o.values = {1.0};
  ParticleSet s = smc_tempering([](const Vector&) { return -2.0; }, p.space, o);
  CHECK(s.size() == 500);
  CHECK(s.ess() == doctest::Approx(500.0));
  CHECK((s.weights.array() == s.weights[0]).all());
  CHECK(s.meta.schedule == std::vector<double>{1.0});
}

TEST_CASE("constant likelihood reproduces the prior") {
  auto p = testbed::make_bimodal(1.0, true);
  SmcOptions o;
  o.n_particles = 2000;
  o.seed = 3;
  ParticleSet s = smc_tempering([](const Vector&) { return 0.0; }, p.space, o);
  CHECK(th::ks_distance(th::col(s.points, 0), [&](double t) { return p.space[0].cdf(t); }) < 0.05);
}

TEST_CASE("conjugate recovery across replicates") {
  auto p = testbed::make_linear_gaussian(1.0);
  std::vector<double> means, vars;
  for (std::uint64_t r = 0; r < 12; ++r) {
    SmcOptions o;
    o.n_particles = 1000;
    o.seed = 100 + r;
    ParticleSet s = smc_tempering(log_lik_of(p), p.space, o);
    CHECK(s.weights.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s.ess() >= 1.0);
    CHECK(s.ess() <= 1000.0 + 1e-9);
    means.push_back(s.mean()[0]);
    vars.push_back(s.variance()[0]);
  }
  double se_m = std::sqrt(th::var(means)), se_v = std::sqrt(th::var(vars));
  MESSAGE("single-run SE mean " << se_m << " var " << se_v);
  CHECK(std::abs(means[0] - 0.5) < 3 * se_m);
  CHECK(std::abs(vars[0] - 0.5) < 3 * se_v);
  CHECK(std::abs(th::mean(means) - 0.5) < 3 * se_m / std::sqrt(12.0));
  CHECK(std::abs(th::mean(vars) - 0.5) < 3 * se_v / std::sqrt(12.0));
}

TEST_CASE("bimodal mode masses") {
  for (bool skewed : {false, true}) {
    auto p = testbed::make_bimodal(1.0, skewed);
    SmcOptions o;
    o.n_particles = 2000;
    o.seed = 5;
    o.mh_moves = 2;
    ParticleSet s = smc_tempering(log_lik_of(p), p.space, o);
    double oracle = p.oracle->mean[0];
    MESSAGE("skewed " << skewed << ": mass " << positive_mass(s) << " oracle " << oracle);
    CHECK(std::abs(positive_mass(s) - oracle) < 0.05);
    CHECK(s.meta.schedule.back() == 1.0);
    CHECK(s.meta.schedule.size() > 1);
  }
}

TEST_CASE("a collapsed single stage is a degeneracy error") {
  auto p = testbed::make_linear_gaussian();
  SmcOptions o;
  o.n_particles = 50;
  o.adaptive = false;
  o.values = {1.0};
  LogDensity sharp = [](const Vector& x) { return -1e7 * (x[0] - 1.0) * (x[0] - 1.0); };
  CHECK_THROWS_AS(smc_tempering(sharp, p.space, o), DegeneracyError);
}

TEST_CASE("option validation") {
  auto p = testbed::make_linear_gaussian();
  SmcOptions o;
  o.n_particles = 10;
  CHECK_THROWS_AS(smc_tempering(log_lik_of(p), p.space, o), ParameterError);
  o.n_particles = 100;
  o.adaptive = false;
  o.values = {0.5};
  CHECK_THROWS_AS(smc_tempering(log_lik_of(p), p.space, o), ParameterError);
  CHECK(smc_schedule_from_string("abc-tolerance") == SmcSchedule::abc_tolerance);
  CHECK(to_string(SmcSchedule::tempering) == "tempering");
  CHECK_THROWS_AS(smc_schedule_from_string("annealing"), ConfigurationError);
}

TEST_CASE("thread count does not change the result") {
  auto p = testbed::make_bimodal();
  SmcOptions o;
  o.n_particles = 400;
  o.seed = 8;
  o.threads = 1;
  ParticleSet a = smc_tempering(log_lik_of(p), p.space, o);
  o.threads = 4;
  ParticleSet b = smc_tempering(log_lik_of(p), p.space, o);
  CHECK(a.points == b.points);
  CHECK(a.weights == b.weights);
}

TEST_CASE("abc tolerance schedule") {
  auto p = testbed::make_linear_gaussian(1.0);
  auto dist = make_summary_distance_score(p.simulator, p.observations, SummaryStatistic{});
  SmcOptions o;
  o.schedule = SmcSchedule::abc_tolerance;
  o.n_particles = 1000;
  o.final_tolerance = 0.05;
  o.seed = 2;
  o.mh_moves = 2;
  ParticleSet s = smc_abc(dist, p.space, o);
  CHECK(s.meta.schedule.back() == doctest::Approx(0.05));
  for (std::size_t j = 1; j < s.meta.schedule.size(); ++j) CHECK(s.meta.schedule[j] < s.meta.schedule[j - 1]);
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) CHECK(std::abs(s.points(i, 0) - 1.0) < 0.05);
  CHECK(s.weights.sum() == doctest::Approx(1.0).epsilon(1e-10));

  // with a deterministic identity simulator the ABC posterior at 0.05 is the
  // prior restricted to |x - 1| < 0.05; its mean is just below 1
  CHECK(s.mean()[0] == doctest::Approx(1.0).epsilon(0.01));

  o.adaptive = false;
  o.values = {2.0, 1.0, 0.5};
  ParticleSet f = smc_abc(dist, p.space, o);
  CHECK(f.meta.schedule == std::vector<double>{2.0, 1.0, 0.5});
  o.values = {1.0, 2.0};
  CHECK_THROWS_AS(smc_abc(dist, p.space, o), ParameterError);
}

TEST_CASE("abc tolerance on the discrete testbed") {
  auto p = testbed::make_discrete_stochastic(5);
  auto post = testbed::discrete_posterior(5);
  auto dist = make_summary_distance_score(p.simulator, p.observations, SummaryStatistic{});
  SmcOptions o;
  o.schedule = SmcSchedule::abc_tolerance;
  o.n_particles = 4000;
  o.final_tolerance = 0.5;
  o.seed = 6;
  ParticleSet s = smc_abc(dist, p.space, o);
  std::vector<double> freq(5, 0);
  for (Eigen::Index i = 0; i < s.points.rows(); ++i)
    freq[static_cast<std::size_t>(std::lround(s.points(i, 0)) - 1)] += s.weights[i];
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(freq[k] - post[k]) < 0.05);
}
