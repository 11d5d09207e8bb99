#pragma once

#include <functional>
#include <span>
#include <vector>

#include "calibr8/core.hpp"
#include "calibr8/gp.hpp"
#include "calibr8/observation.hpp"

namespace calibr8 {

/// S(x) with lower meaning a better fit. Stochastic scores consume `seed`.
class ScoreFunction {
 public:
  enum class Kind { neg_log_lik, implausibility_max, summary_distance };
  using Fn = std::function<double(const Vector& x, std::uint64_t seed)>;

  ScoreFunction(Kind kind, Fn fn) : kind_(kind), fn_(std::move(fn)) {}
  Kind kind() const noexcept { return kind_; }
  double operator()(const Vector& x, std::uint64_t seed = 0) const { return fn_(x, seed); }

 private:
  Kind kind_;
  Fn fn_;
};

/// -log pi(y | x) at the operator-mapped simulator output; stochastic
/// simulators use the m-sample estimator.
double neg_log_lik_score(const Vector& x, const BlackBoxSimulator& sim, const ObservationSet& obs,
                         const ModelParams& params = {}, std::uint64_t seed = 0, std::size_t m = 1);

ScoreFunction make_neg_log_lik_score(BlackBoxSimulator sim, ObservationSet obs, ModelParams params = {},
                                     std::size_t m = 1);

/// |y - mean| / sqrt(var_obs + var_disc + var_code). Throws NumericError
/// when the variance sum is not positive.
double implausibility(double y, double mean, double var_obs, double var_disc, double var_code);

/// Per-output implausibility.
Vector implausibility(const Vector& y, const Vector& mean, const Vector& var_obs, const Vector& var_disc,
                      const Vector& var_code);

enum class ImplausibilityCombine { max, second_max };

double combined_implausibility(const Vector& y, const Vector& mean, const Vector& var_obs, const Vector& var_disc,
                               const Vector& var_code, ImplausibilityCombine how = ImplausibilityCombine::max);

/// Max implausibility of the simulator output (var_code = 0).
ScoreFunction make_implausibility_score(BlackBoxSimulator sim, ObservationSet obs, Vector var_disc,
                                        ImplausibilityCombine how = ImplausibilityCombine::max);
/// Max implausibility of an observation-space emulator (var_code = GP variance).
ScoreFunction make_implausibility_score(Emulator emulator, ObservationSet obs, Vector var_disc,
                                        ImplausibilityCombine how = ImplausibilityCombine::max);

enum class DistanceMetric { euclidean, scaled_euclidean };

/// ||T(g(f(x, u*, seed))) - T(y)|| with optional per-summary weights.
ScoreFunction make_summary_distance_score(BlackBoxSimulator sim, ObservationSet obs, SummaryStatistic T,
                                          DistanceMetric metric = DistanceMetric::euclidean, Vector weights = {});

struct AcceptanceRule {
  enum class Provenance { fixed, three_sigma, quantile };
  double tau = 3.0;
  Provenance provenance = Provenance::three_sigma;
  double alpha = 0.01;  // quantile only

  static AcceptanceRule fixed(double tau) { return {tau, Provenance::fixed, 1.0}; }
  static AcceptanceRule three_sigma() { return {3.0, Provenance::three_sigma, 1.0}; }
  static AcceptanceRule quantile(double alpha);
};

/// score < tau. Quantile rules must be resolved against a score set first.
bool accept(const AcceptanceRule& rule, double score);

/// Threshold accepting the ceil(alpha * N) lowest scores (ties at the
/// cutoff all accepted): the next double above the k-th smallest score.
double quantile_threshold(double alpha, std::span<const double> scores);

/// Fixed/three-sigma rules applied as-is; quantile rules resolved on `scores`.
std::vector<char> accept_all(const AcceptanceRule& rule, std::span<const double> scores, double* tau_out = nullptr);

}  // namespace calibr8
