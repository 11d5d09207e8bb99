#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calibr8/calibrate.hpp"
#include "calibr8/core.hpp"
#include "calibr8/gp.hpp"
#include "calibr8/observation.hpp"

namespace calibr8 {

struct PredictiveSample {
  Matrix draws;  // M x n
  ControlInput control;
  std::string source;   // method tag of the posterior
  double source_ess = 0.0;
  Vector q05, q50, q95;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return static_cast<std::size_t>(draws.rows()); }
  std::size_t outputs() const noexcept { return static_cast<std::size_t>(draws.cols()); }
};

/// Prediction-time discrepancy: a GP over observation locations conditioned
/// on its calibration-time values, evaluated at `locations`.
struct PredictionDiscrepancy {
  GPModel gp;
  Matrix locations;  // n x q
};

struct PredictOptions {
  std::size_t draws = 1000;
  bool add_noise = true;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Weighted resampling of the posterior, one simulator run per draw at u_p,
/// optional discrepancy draw, then observation noise from `obs` (whose y
/// only fixes the observation length).
PredictiveSample calibrated_predict(const BlackBoxSimulator& sim, const ParticleSet& posterior, const ControlInput& u_p,
                                    const ObservationSet& obs, const PredictOptions& opts,
                                    const std::optional<PredictionDiscrepancy>& discrepancy = std::nullopt);

PredictiveSample calibrated_predict(const BlackBoxSimulator& sim, const Chain& posterior, const ControlInput& u_p,
                                    const ObservationSet& obs, const PredictOptions& opts,
                                    const std::optional<PredictionDiscrepancy>& discrepancy = std::nullopt);

/// Linear-interpolation sample quantile (type 7).
double sample_quantile(std::vector<double> v, double p);

/// Ensemble CRPS: E|X - y| - 0.5 E|X - X'|.
double crps_ensemble(std::vector<double> draws, double y);

struct HoldoutReport {
  std::vector<double> levels;
  std::vector<std::vector<char>> covered;  // [level][output]
  Vector coverage;                         // per level, fraction of outputs covered
  Vector crps;                             // per output
  std::vector<char> outside_99;            // per output
  bool reliable = true;
  std::vector<std::string> warnings;
};

HoldoutReport holdout_validate(const PredictiveSample& pred, const Vector& y_test, std::span<const double> levels);

}  // namespace calibr8
