#include "calibr8/testbed.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "calibr8/error.hpp"

namespace calibr8::testbed {

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t panels) {
  if (panels < 2) panels = 2;
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
  return s * h / 3.0;
}

namespace {

ObservationSet gaussian_obs(Vector y, double sigma) {
  ObservationSet o;
  o.y = std::move(y);
  o.model = ObservationModel::gaussian(sigma);
  o.validate();
  return o;
}

/// Generator that adds gaussian noise to a deterministic truth map.
std::function<ObservationSet(const Vector&, std::uint64_t)> noisy_generator(
    std::function<Vector(const Vector&)> truth, double sigma, std::optional<Matrix> locations = std::nullopt) {
  return [truth = std::move(truth), sigma, locations](const Vector& x, std::uint64_t seed) {
    Vector mu = truth(x);
    Rng rng = make_rng(seed, stream::testbed);
    std::normal_distribution<double> normal(0.0, sigma);
    for (auto& v : mu) v += normal(rng);
    ObservationSet o;
    o.y = std::move(mu);
    o.model = ObservationModel::gaussian(sigma);
    o.locations = locations;
    o.validate();
    return o;
  };
}

}  // namespace

// ------------------------------------------------------------ linear gaussian

Oracle linear_gaussian_posterior(double y) {
  return {"N(y/2, 1/2), truncation at +-5 neglected", Vector::Constant(1, y / 2), Vector::Constant(1, 0.5)};
}

TestProblem make_linear_gaussian(double y) {
  ParameterSpace space({{"x", -5.0, 5.0, PriorSpec::truncated_normal(0.0, 1.0)}});
  BlackBoxSimulator sim({"linear_gaussian", 1, 0, 1, false},
                        [](const Vector& x, const Vector&, std::uint64_t) { return Vector(x.head(1)); }, space);
  TestProblem p{"linear_gaussian", sim, space, Vector::Constant(1, 0.0),
                gaussian_obs(Vector::Constant(1, y), 1.0), {}, linear_gaussian_posterior(y)};
  p.generator = noisy_generator([](const Vector& x) { return Vector(x.head(1)); }, 1.0);
  return p;
}

// ------------------------------------------------------------ monotone

double monotone_f(double x) { return x * x * x + x; }

double monotone_inverse(double y) {
  double lo = -1.0, hi = 1.0;
  while (monotone_f(lo) > y) lo *= 2;
  while (monotone_f(hi) < y) hi *= 2;
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    double mid = 0.5 * (lo + hi);
    (monotone_f(mid) < y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TestProblem make_monotone_1d(double y, double sigma) {
  ParameterSpace space({{"x", -2.0, 2.0, PriorSpec::uniform()}});
  auto f = [](const Vector& x) { return Vector::Constant(1, monotone_f(x[0])); };
  BlackBoxSimulator sim({"monotone_1d", 1, 0, 1, false},
                        [f](const Vector& x, const Vector&, std::uint64_t) { return f(x); }, space);
  TestProblem p{"monotone_1d", sim, space, Vector::Constant(1, monotone_inverse(y)),
                gaussian_obs(Vector::Constant(1, y), sigma), {}, std::nullopt};
  p.generator = noisy_generator(f, sigma);
  return p;
}

// ------------------------------------------------------------ misspecified machine

Vector misspec_truth(const Vector& w, double x_true, bool zero_bias) {
  if (zero_bias) return x_true * w;
  return (x_true * w.array() / (1.0 + w.array() / 20.0)).matrix();
}

GPModel misspec_discrepancy_prior() {
  Kernel k{KernelKind::squared_exponential, Vector::Constant(1, 1.0), 0.04, 1e-8};
  return GPModel(k, MeanFunction{}, 0.0, GPModel::Transform::identity(1));
}

double misspec_pseudo_true(const Vector& w, double x_true) {
  // Expected gaussian neg-log-lik is (||truth - x w||^2 + const) / (2 s^2);
  // scan densely, then refine on the bracketing cell.
  Vector t = misspec_truth(w, x_true);
  auto loss = [&](double x) { return (t - x * w).squaredNorm(); };
  double best = 0.0, bl = loss(0.0);
  for (int i = 1; i <= 200000; ++i) {
    double x = 2.0 * i / 200000.0, l = loss(x);
    if (l < bl) {
      bl = l;
      best = x;
    }
  }
  return best;
}

TestProblem make_misspecified_machine(const MisspecOptions& o, std::uint64_t seed) {
  if (o.n_obs < 2) throw ParameterError("misspecified machine needs at least 2 observations");
  ParameterSpace space({{"x", 0.0, 2.0, PriorSpec::uniform()}});
  Vector w = Vector::LinSpaced(static_cast<Eigen::Index>(o.n_obs), 0.1, 3.0);
  Matrix loc = w;
  BlackBoxSimulator sim({"misspec_machine", 1, 0, o.n_obs, false},
                        [w](const Vector& x, const Vector&, std::uint64_t) { return Vector(x[0] * w); }, space);
  auto gen = noisy_generator([w, zb = o.zero_bias](const Vector& x) { return misspec_truth(w, x[0], zb); },
                             o.noise_sd, loc);
  TestProblem p{"misspec_machine", sim, space, Vector::Constant(1, o.x_true), {}, gen, std::nullopt};
  p.observations = gen(p.true_x, seed);
  return p;
}

// ------------------------------------------------------------ bimodal

double bimodal_positive_mass(const ParameterSpace& space, double y, double sigma, std::size_t panels) {
  const Dimension& d = space[0];
  auto dens = [&](double x) {
    double r = (y - x * x) / sigma;
    return std::exp(d.log_density(x) - 0.5 * r * r);
  };
  double lo = std::max(d.lower, -1e300), hi = d.upper;
  double neg = lo < 0 ? simpson(dens, lo, std::min(0.0, hi), panels) : 0.0;
  double pos = hi > 0 ? simpson(dens, std::max(0.0, lo), hi, panels) : 0.0;
  return pos / (pos + neg);
}

TestProblem make_bimodal(double y, bool skewed) {
  ParameterSpace space(
      {{"x", -3.0, 3.0, skewed ? PriorSpec::truncated_normal(1.0, 1.0) : PriorSpec::uniform()}});
  auto f = [](const Vector& x) { return Vector::Constant(1, x[0] * x[0]); };
  BlackBoxSimulator sim({"bimodal", 1, 0, 1, false},
                        [f](const Vector& x, const Vector&, std::uint64_t) { return f(x); }, space);
  double mass = bimodal_positive_mass(space, y);
  Oracle oracle{"posterior mass on x > 0 (first entry), by quadrature", Vector::Constant(1, mass),
                Vector()};
  TestProblem p{skewed ? "bimodal_skewed" : "bimodal", sim, space, Vector::Constant(1, std::sqrt(std::max(0.0, y))),
                gaussian_obs(Vector::Constant(1, y), 0.2), {}, oracle};
  p.generator = noisy_generator(f, 0.2);
  return p;
}

// ------------------------------------------------------------ discrete stochastic

std::array<double, 5> discrete_posterior(int y) {
  if (y < 0 || y > 10) throw ParameterError("discrete testbed observations lie in 0..10");
  std::array<double, 5> p{};
  double total = 0.0;
  for (int x = 1; x <= 5; ++x) {
    double q = x / 6.0;
    double binom = std::tgamma(11.0) / (std::tgamma(y + 1.0) * std::tgamma(11.0 - y));
    p[static_cast<std::size_t>(x - 1)] = binom * std::pow(q, y) * std::pow(1 - q, 10 - y);
    total += p[static_cast<std::size_t>(x - 1)];
  }
  for (auto& v : p) v /= total;
  return p;
}

TestProblem make_discrete_stochastic(int y) {
  if (y < 0 || y > 10) throw ParameterError("discrete testbed observations lie in 0..10");
  ParameterSpace space({{"x", 0.5, 5.5, PriorSpec::uniform()}});
  auto draw = [](const Vector& x, const Vector&, std::uint64_t seed) {
    double k = std::clamp(std::round(x[0]), 1.0, 5.0);
    Rng rng(seed);
    std::binomial_distribution<int> binom(10, k / 6.0);
    return Vector::Constant(1, static_cast<double>(binom(rng)));
  };
  BlackBoxSimulator sim({"discrete_stochastic", 1, 0, 1, true}, draw, space);
  auto post = discrete_posterior(y);
  Oracle oracle{"posterior over x = 1..5 by enumeration", Eigen::Map<const Vector>(post.data(), 5), Vector()};
  ObservationSet obs;
  obs.y = Vector::Constant(1, static_cast<double>(y));
  obs.model = ObservationModel::perfect();
  obs.validate();
  TestProblem p{"discrete_stochastic", sim, space, Vector::Constant(1, 3.0), obs, {}, oracle};
  p.generator = [draw](const Vector& x, std::uint64_t seed) {
    ObservationSet o;
    o.y = draw(x, Vector(0), derive_seed(seed, stream::testbed));
    o.model = ObservationModel::perfect();
    o.validate();
    return o;
  };
  return p;
}

// ------------------------------------------------------------ registry

std::vector<std::string> problem_names() {
  return {"linear_gaussian", "monotone_1d", "misspec_machine", "bimodal", "bimodal_skewed", "discrete_stochastic"};
}

TestProblem make_problem(const std::string& name) {
  if (name == "linear_gaussian") return make_linear_gaussian();
  if (name == "monotone_1d") return make_monotone_1d();
  if (name == "misspec_machine") return make_misspecified_machine();
  if (name == "bimodal") return make_bimodal();
  if (name == "bimodal_skewed") return make_bimodal(1.0, true);
  if (name == "discrete_stochastic") return make_discrete_stochastic();
  throw ConfigurationError("unknown builtin simulator '" + name + "'", "simulator.builtin");
}

}  // namespace calibr8::testbed
