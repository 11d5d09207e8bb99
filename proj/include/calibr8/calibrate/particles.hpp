#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "calibr8/core.hpp"

namespace calibr8 {

using LogDensity = std::function<double(const Vector& x)>;

/// Weighted posterior / NROY representation shared by every engine.
struct ParticleSet {
  struct Metadata {
    std::string method;
    std::vector<double> schedule;  // realized temperatures or tolerances
    std::uint64_t accepted = 0;
    std::uint64_t proposed = 0;
    std::uint64_t n_sim_evals = 0;
    bool partial = false;
    std::vector<std::string> warnings;
  };

  Matrix points;   // N x d
  Vector weights;  // sums to 1
  Vector log_post; // N entries, or empty
  Metadata meta;

  std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points.cols()); }

  double ess() const;
  Vector mean() const;
  Vector variance() const;
  Matrix covariance() const;
  double acceptance_rate() const;

  /// Equal weights over the rows of `points`.
  static ParticleSet uniform(Matrix points, std::string method);
};

/// 1 / sum w_i^2 for weights normalized to sum 1.
double effective_sample_size(const Vector& weights);

/// exp-normalizes log weights; throws DegeneracyError if all are -inf.
Vector normalize_log_weights(const Vector& log_weights);

std::vector<std::size_t> systematic_resample(const Vector& weights, std::size_t m, Rng& rng);
std::vector<std::size_t> multinomial_resample(const Vector& weights, std::size_t m, Rng& rng);

struct Chain {
  Matrix states;     // T x d, post burn-in
  Vector log_post;   // T
  double acceptance_rate = 0.0;  // post burn-in
  std::size_t burn_in = 0;
  std::uint64_t accepted = 0;
  std::uint64_t proposed = 0;
  std::uint64_t n_sim_evals = 0;
  Vector proposal_sd;  // frozen scale after burn-in
  bool partial = false;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return static_cast<std::size_t>(states.rows()); }
  Vector mean() const;
  Vector variance() const;
  ParticleSet to_particles() const;
};

/// Autocorrelation-based effective sample size of a scalar series
/// (initial monotone sequence estimator).
double series_ess(const Vector& series);
/// Monte Carlo standard error of the mean of a correlated series.
double series_mcse(const Vector& series);
/// Split R-hat across independent chains of one coordinate.
double split_rhat(const std::vector<Vector>& chains);

}  // namespace calibr8
