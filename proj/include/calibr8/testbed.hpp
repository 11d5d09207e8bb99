#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "calibr8/core.hpp"
#include "calibr8/gp.hpp"
#include "calibr8/observation.hpp"

namespace calibr8::testbed {

/// Analytic posterior summary where one exists.
struct Oracle {
  std::string description;
  Vector mean;
  Vector variance;
};

struct TestProblem {
  std::string name;
  BlackBoxSimulator simulator;
  ParameterSpace space;
  Vector true_x;
  /// Default observations (the documented example data).
  ObservationSet observations;
  /// Synthetic data at parameter x from seed; may differ from the simulator.
  std::function<ObservationSet(const Vector& x, std::uint64_t seed)> generator;
  std::optional<Oracle> oracle;
};

/// f(x) = x on [-5, 5], truncated N(0, 1) prior, gaussian noise sd 1.
TestProblem make_linear_gaussian(double y = 1.0);
/// N(y / 2, 1 / 2); the truncation at +-5 is ignored (mass below 1e-6).
Oracle linear_gaussian_posterior(double y);

/// f(x) = x^3 + x on [-2, 2], uniform prior, gaussian noise sd `sigma`.
TestProblem make_monotone_1d(double y = 2.0, double sigma = 0.1);
double monotone_f(double x);
/// Preimage of y under the monotone map, by bisection to 1e-12.
double monotone_inverse(double y);

struct MisspecOptions {
  std::size_t n_obs = 30;
  double x_true = 0.65;
  double noise_sd = 0.01;
  bool zero_bias = false;
};
/// f(x)[w] = x w on w in linspace(0.1, 3, n); data carries the multiplicative
/// bias 1 / (1 + w / 20). Prior uniform on [0, 2].
TestProblem make_misspecified_machine(const MisspecOptions& opts = {}, std::uint64_t seed = 1);
/// Generator mean at the observation locations.
Vector misspec_truth(const Vector& w, double x_true, bool zero_bias = false);
/// Zero-mean squared-exponential discrepancy prior over w (sd 0.2, lengthscale 1).
GPModel misspec_discrepancy_prior();
/// Minimizer of the expected no-discrepancy score, by dense grid.
double misspec_pseudo_true(const Vector& w, double x_true);

/// f(x) = x^2 on [-3, 3], gaussian sd 0.2. Skewed variant: truncated
/// N(1, 1) prior instead of uniform.
TestProblem make_bimodal(double y = 1.0, bool skewed = false);
/// Posterior mass on x > 0 by composite Simpson quadrature.
double bimodal_positive_mass(const ParameterSpace& space, double y, double sigma = 0.2, std::size_t panels = 20000);

/// x uniform on [0.5, 5.5]; the simulator rounds x to {1..5} and draws
/// k ~ Binomial(10, x / 6).
TestProblem make_discrete_stochastic(int y = 5);
/// Posterior over {1..5} by enumeration.
std::array<double, 5> discrete_posterior(int y);

/// Names addressable from the command line.
std::vector<std::string> problem_names();
TestProblem make_problem(const std::string& name);

/// Composite Simpson rule on [a, b] with an even number of panels.
double simpson(const std::function<double(double)>& f, double a, double b, std::size_t panels);

}  // namespace calibr8::testbed
