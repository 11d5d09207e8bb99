#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "calibr8/error.hpp"
#include "calibr8/observation.hpp"
#include "helpers.hpp"

using namespace calibr8;

namespace {

const double kLog2Pi = std::log(2 * std::numbers::pi);

ObservationSet make_obs(Vector y, ObservationModel m) {
  ObservationSet o;
  o.y = std::move(y);
  o.model = std::move(m);
  o.validate();
  return o;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// f(x) = x + eta, eta ~ N(0, noise^2).
BlackBoxSimulator stochastic_gaussian(double noise = 1.0) {
  return BlackBoxSimulator({"stochastic_gaussian", 1, 0, 1, true},
                           [noise](const Vector& x, const Vector&, std::uint64_t seed) {
                             Rng rng(seed);
                             std::normal_distribution<double> n(0.0, noise);
                             return Vector::Constant(1, x[0] + n(rng));
                           });
}

}  // namespace

TEST_CASE("operator examples") {
  CHECK(apply_operator(ObservationOperator::identity(), vec({1, 2})) == vec({1, 2}));
  ObservationOperator mean({OperatorComponent::window_mean(0, 2)});
  CHECK(apply_operator(mean, vec({2, 4}))[0] == 3.0);
  ObservationOperator sel({OperatorComponent::select(3)});
  CHECK_THROWS_AS(apply_operator(sel, vec({1, 2})), ConfigurationError);
  CHECK_THROWS_AS(sel.check(2), ConfigurationError);
  CHECK_NOTHROW(sel.check(4));
  ObservationOperator mix({OperatorComponent::select(1), OperatorComponent::window_sum(0, 3),
                           OperatorComponent::affine(vec({1, -1, 2}), 0.5)});
  Vector g = apply_operator(mix, vec({1, 2, 3}));
  CHECK(g == vec({2, 6, 5.5}));
}

TEST_CASE("summary examples") {
  SummaryStatistic id;
  CHECK(summarize(id, vec({1, 2, 3})) == vec({1, 2, 3}));
  SummaryStatistic mean{SummaryStatistic::Kind::mean};
  CHECK(summarize(mean, vec({1, 2, 3}))[0] == 2.0);
  SummaryStatistic var{SummaryStatistic::Kind::variance};
  CHECK(summarize(var, vec({1, 1, 1}))[0] == 0.0);
  SummaryStatistic q{SummaryStatistic::Kind::quantiles, 0, {0.0, 0.5, 1.0}};
  CHECK(summarize(q, vec({4, 1, 3, 2})) == vec({1, 2.5, 4}));
  SummaryStatistic fixed{SummaryStatistic::Kind::mean, 3};
  CHECK_THROWS_AS(summarize(fixed, vec({1, 2})), ConfigurationError);
  SummaryStatistic aff{SummaryStatistic::Kind::affine};
  aff.A = Matrix::Ones(1, 3);
  aff.b = vec({1});
  CHECK(summarize(aff, vec({1, 2, 3}))[0] == 7.0);
  CHECK(summarize(q, vec({4, 1, 3, 2})) == summarize(q, vec({4, 1, 3, 2})));
}

TEST_CASE("gaussian log likelihood examples") {
  auto o = make_obs(vec({0.0}), ObservationModel::gaussian(1.0));
  CHECK(log_likelihood(o, vec({0.0})) == doctest::Approx(-0.9189385332));
  CHECK(log_likelihood(o, vec({1.0})) == doctest::Approx(-0.5 * kLog2Pi - 0.5));
  auto c = make_obs(vec({1, 1}), ObservationModel::correlated(Matrix::Identity(2, 2)));
  CHECK(log_likelihood(c, vec({0, 0})) == doctest::Approx(-kLog2Pi - 1.0));
}

TEST_CASE("correlated likelihood against a direct density") {
  Matrix S(2, 2);
  S << 2.0, 0.6, 0.6, 1.0;
  auto c = make_obs(vec({0.3, -0.4}), ObservationModel::correlated(S));
  Vector r = vec({0.3 - 1.0, -0.4 - 0.5});
  double det = 2.0 * 1.0 - 0.36;
  double quad = (r[0] * r[0] * 1.0 - 2 * 0.6 * r[0] * r[1] + 2.0 * r[1] * r[1]) / det;
  CHECK(log_likelihood(c, vec({1.0, 0.5})) == doctest::Approx(-kLog2Pi - 0.5 * std::log(det) - 0.5 * quad).epsilon(1e-12));
}

TEST_CASE("diagonal correlated equals iid") {
  Vector s = vec({0.5, 1.5, 2.0});
  Matrix S = s.array().square().matrix().asDiagonal();
  Vector y = vec({1, 2, 3}), p = vec({0.1, 2.5, 5});
  double a = log_likelihood(make_obs(y, ObservationModel::gaussian(s)), p);
  double b = log_likelihood(make_obs(y, ObservationModel::correlated(S)), p);
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("gaussian likelihood is maximized at pred = y") {
  Rng rng(5);
  std::normal_distribution<double> n(0, 2);
  for (int t = 0; t < 50; ++t) {
    Vector y(3);
    for (auto& v : y) v = n(rng);
    auto o = make_obs(y, ObservationModel::gaussian(vec({0.5, 1, 2})));
    double top = log_likelihood(o, y);
    for (int k = 0; k < 20; ++k) {
      Vector p(3);
      for (auto& v : p) v = n(rng);
      CHECK(top >= log_likelihood(o, p));
    }
  }
}

TEST_CASE("perfect match and student t") {
  auto o = make_obs(vec({2.0}), ObservationModel::perfect());
  CHECK(log_likelihood(o, vec({2.0})) == 0.0);
  CHECK(log_likelihood(o, vec({2.0000001})) == -INFINITY);
  CHECK(model_warnings(o).empty());
  CHECK_FALSE(model_warnings(make_obs(vec({2.5}), ObservationModel::perfect())).empty());

  auto t = make_obs(vec({1.0}), ObservationModel::student(vec({2.0}), 4.0));
  double z = 0.5, nu = 4.0;
  double ref = std::lgamma(2.5) - std::lgamma(2.0) - 0.5 * std::log(nu * std::numbers::pi) - std::log(2.0) -
               2.5 * std::log1p(z * z / nu);
  CHECK(log_likelihood(t, vec({0.0})) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(observation_variance(t)[0] == doctest::Approx(4.0 * 4.0 / 2.0));
}

TEST_CASE("model validation") {
  ObservationSet bad;
  bad.y = vec({1});
  bad.model = ObservationModel::gaussian(-1.0);
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  bad.model = ObservationModel::student(vec({1}), 2.0);
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  Matrix np(2, 2);
  np << 1, 2, 2, 1;
  CHECK_THROWS_AS(ObservationModel::correlated(np), NumericError);
  ObservationSet loc;
  loc.y = vec({1, 2});
  loc.model = ObservationModel::gaussian(1.0);
  loc.locations = Matrix::Zero(3, 1);
  CHECK_THROWS_AS(loc.validate(), ConfigurationError);
}

TEST_CASE("free parameters must be bound") {
  ObservationSet o;
  o.y = vec({0});
  o.model = ObservationModel::gaussian(1.0);
  o.model.free_params = {"sigma"};
  o.validate();
  CHECK_THROWS_AS(log_likelihood(o, vec({0})), ConfigurationError);
  double ll = log_likelihood(o, vec({0}), {{"sigma", 2.0}});
  CHECK(ll == doctest::Approx(-0.5 * kLog2Pi - std::log(2.0)));
}

TEST_CASE("stochastic estimator degenerate cases") {
  auto det = stochastic_gaussian(0.0);
  auto o = make_obs(vec({0.2}), ObservationModel::gaussian(1.0));
  Vector x = vec({0.5});
  double exact = log_likelihood(o, vec({0.5}));
  for (std::size_t m : {1u, 7u, 50u}) CHECK(log_likelihood_stochastic(det, o, x, m, 3).value == doctest::Approx(exact));

  auto sim = stochastic_gaussian();
  Vector f = evaluate(sim, x, ControlInput::none(), derive_seed(9, stream::likelihood, 0));
  CHECK(log_likelihood_stochastic(sim, o, x, 1, 9).value == doctest::Approx(log_likelihood(o, f)));

  auto pm = make_obs(vec({0.2}), ObservationModel::perfect());
  auto est = log_likelihood_stochastic(sim, pm, x, 10, 1);
  CHECK(est.degenerate);
  CHECK(est.value == -INFINITY);
}

TEST_CASE("stochastic estimator converges to the convolution") {
  auto sim = stochastic_gaussian();
  auto o = make_obs(vec({0.4}), ObservationModel::gaussian(1.0));
  Vector x = vec({0.4});
  const std::size_t m = 100000;
  double est = log_likelihood_stochastic(sim, o, x, m, 21).value;
  // standard error of the log estimate from an independent sample of the integrand
  Rng rng(99);
  std::normal_distribution<double> n;
  std::vector<double> L(20000);
  for (auto& l : L) l = std::exp(-0.5 * std::pow(n(rng), 2) - 0.5 * kLog2Pi);
  double se = std::sqrt(th::var(L) / static_cast<double>(m)) / th::mean(L);
  CHECK(std::abs(est - (-0.5 * std::log(4 * std::numbers::pi))) < 3 * se);
}

TEST_CASE("stochastic estimator variance shrinks with m") {
  auto sim = stochastic_gaussian();
  auto o = make_obs(vec({1.0}), ObservationModel::gaussian(1.0));
  Vector x = vec({0.0});
  std::vector<double> sds;
  for (std::size_t m : {10u, 100u, 1000u}) {
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 50; ++r) v.push_back(log_likelihood_stochastic(sim, o, x, m, 1000 + r).value);
    sds.push_back(th::var(v));
  }
  CHECK(sds[0] > sds[1]);
  CHECK(sds[1] > sds[2]);
}

TEST_CASE("discrepancy likelihood") {
  auto o = make_obs(vec({0.3, -0.2}), ObservationModel::gaussian(1.0));
  o.locations = Matrix::Zero(2, 1);
  (*o.locations)(1, 0) = 1.0;
  o.validate();
  Vector pred = vec({0.1, 0.1});
  GPModel zero(Kernel{KernelKind::squared_exponential, Vector::Ones(1), 0.0, 1e-8}, MeanFunction{}, 0.0,
               GPModel::Transform::identity(1));
  CHECK(std::abs(discrepancy_log_likelihood(o, pred, zero) - log_likelihood(o, pred)) < 1e-12);

  auto one = make_obs(vec({0.0}), ObservationModel::gaussian(1.0));
  one.locations = Matrix::Zero(1, 1);
  one.validate();
  GPModel unit(Kernel{KernelKind::squared_exponential, Vector::Ones(1), 1.0, 0.0}, MeanFunction{}, 0.0,
               GPModel::Transform::identity(1));
  CHECK(discrepancy_log_likelihood(one, vec({0.0}), unit) == doctest::Approx(-0.5 * std::log(4 * std::numbers::pi)));

  Matrix W = Matrix::Constant(2, 1, 0.7);
  Matrix C = unit.prior_covariance(W);
  CHECK(C(0, 1) == doctest::Approx(C(0, 0)));

  auto noloc = make_obs(vec({0.0}), ObservationModel::gaussian(1.0));
  CHECK_THROWS_AS(discrepancy_log_likelihood(noloc, vec({0.0}), unit), ConfigurationError);
}

TEST_CASE("noise sampling matches the model variance") {
  auto o = make_obs(vec({0, 0}), ObservationModel::gaussian(vec({0.5, 2.0})));
  Rng rng(4);
  std::vector<double> a, b;
  for (int i = 0; i < 20000; ++i) {
    Vector e = sample_noise(o, rng);
    a.push_back(e[0]);
    b.push_back(e[1]);
  }
  CHECK(th::var(a) == doctest::Approx(0.25).epsilon(0.05));
  CHECK(th::var(b) == doctest::Approx(4.0).epsilon(0.05));
  CHECK(sample_noise(make_obs(vec({1}), ObservationModel::perfect()), rng)[0] == 0.0);
}
