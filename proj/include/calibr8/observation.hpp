#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "calibr8/core.hpp"
#include "calibr8/gp.hpp"

namespace calibr8 {

/// One map g_i from the simulator output vector to a real.
struct OperatorComponent {
  enum class Kind { index, mean, sum, affine };
  Kind kind = Kind::index;
  std::size_t index = 0;             // index
  std::size_t begin = 0, end = 0;    // mean / sum over [begin, end)
  Vector weights;                    // affine: weights . f + offset
  double offset = 0.0;

  static OperatorComponent select(std::size_t i) { return {Kind::index, i, 0, 0, {}, 0.0}; }
  static OperatorComponent window_mean(std::size_t b, std::size_t e) { return {Kind::mean, 0, b, e, {}, 0.0}; }
  static OperatorComponent window_sum(std::size_t b, std::size_t e) { return {Kind::sum, 0, b, e, {}, 0.0}; }
  static OperatorComponent affine(Vector w, double off = 0.0) { return {Kind::affine, 0, 0, 0, std::move(w), off}; }
};

class ObservationOperator {
 public:
  /// Identity on outputs of length n (n = 0: any length).
  static ObservationOperator identity(std::size_t n = 0);
  ObservationOperator() = default;
  explicit ObservationOperator(std::vector<OperatorComponent> components);

  bool is_identity() const noexcept { return identity_; }
  /// Observation count; 0 for an unsized identity.
  std::size_t size() const noexcept { return identity_ ? identity_n_ : components_.size(); }
  const std::vector<OperatorComponent>& components() const noexcept { return components_; }
  /// Throws ConfigurationError if any component is not total on length-m vectors.
  void check(std::size_t output_dim) const;

 private:
  bool identity_ = true;
  std::size_t identity_n_ = 0;
  std::vector<OperatorComponent> components_;
};

Vector apply_operator(const ObservationOperator& g, const Vector& f_out);

struct SummaryStatistic {
  enum class Kind { identity, mean, variance, quantiles, affine };
  Kind kind = Kind::identity;
  std::size_t input_length = 0;  // 0: any
  std::vector<double> levels;    // quantiles, in [0, 1]
  Matrix A;                      // affine: A v + b
  Vector b;
};

Vector summarize(const SummaryStatistic& T, const Vector& v);

struct ObservationModel {
  enum class Kind { perfect_match, gaussian_iid, gaussian_correlated, student_t };
  Kind kind = Kind::gaussian_iid;
  Vector sigma;       // per-output sd; a single entry broadcasts
  Matrix covariance;  // gaussian_correlated
  double nu = 5.0;    // student_t degrees of freedom
  /// Names bound at evaluation time through the parameter map ("sigma", "nu").
  std::vector<std::string> free_params;

  static ObservationModel perfect();
  static ObservationModel gaussian(Vector sigma);
  static ObservationModel gaussian(double sigma) { return gaussian(Vector::Constant(1, sigma)); }
  static ObservationModel correlated(Matrix covariance);
  static ObservationModel student(Vector sigma, double nu);

  /// Throws ConfigurationError / NumericError when the invariants fail;
  /// caches the covariance factorization.
  void validate(std::size_t n);

  std::shared_ptr<const Eigen::LLT<Matrix>> chol;
};

std::string to_string(ObservationModel::Kind k);
ObservationModel::Kind model_kind_from_string(const std::string& s);

using ModelParams = std::map<std::string, double>;

struct ObservationSet {
  Vector y;
  ObservationOperator op = ObservationOperator::identity();
  ObservationModel model;
  ControlInput control = ControlInput::none();
  std::optional<Matrix> locations;  // n x q

  std::size_t size() const noexcept { return static_cast<std::size_t>(y.size()); }
  /// Checks operator/model/locations against y; call after construction.
  void validate();
};

/// Non-fatal configuration notes (e.g. perfect-match on continuous data).
std::vector<std::string> model_warnings(const ObservationSet& obs);

/// Per-output observation-error variance (student-t: sigma^2 nu / (nu - 2)).
Vector observation_variance(const ObservationSet& obs, const ModelParams& params = {});

/// Draws one observation-error vector.
Vector sample_noise(const ObservationSet& obs, Rng& rng, const ModelParams& params = {});

/// Exact log density of y under the error model centred at `pred`.
double log_likelihood(const ObservationSet& obs, const Vector& pred, const ModelParams& params = {});

struct LogLikEstimate {
  double value = 0.0;
  bool degenerate = false;  // every sample gave -inf
};

/// log of (1/m) sum_j exp(log_likelihood(obs, g(f(x, u*, seed_j)))), seeds
/// split from `seed` by sample index.
LogLikEstimate log_likelihood_stochastic(const BlackBoxSimulator& sim, const ObservationSet& obs, const Vector& x,
                                         std::size_t m, std::uint64_t seed, const ModelParams& params = {});

/// Log density of y under N(pred + m(W), C(W) + Sigma_eps) with m, C the
/// discrepancy GP's prior mean/covariance at the observation locations.
double discrepancy_log_likelihood(const ObservationSet& obs, const Vector& pred, const GPModel& disc,
                                  const ModelParams& params = {});

}  // namespace calibr8
