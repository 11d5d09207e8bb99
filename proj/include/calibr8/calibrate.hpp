#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calibr8/calibrate/particles.hpp"
#include "calibr8/core.hpp"
#include "calibr8/gp.hpp"
#include "calibr8/observation.hpp"
#include "calibr8/scores.hpp"

namespace calibr8 {

// ---------------------------------------------------------------- mle

struct MleResult {
  Vector x;
  double score = 0.0;
  std::uint64_t evaluations = 0;
  int best_restart = 0;
};

/// Multi-start Nelder-Mead inside the box. Restart 0 starts at the prior
/// mean, the others at latin-hypercube points; the budget is split evenly.
/// Evaluation failures count as +inf.
MleResult mle(const ScoreFunction& score, const ParameterSpace& space, std::size_t budget, int restarts,
              std::uint64_t seed);

// ---------------------------------------------------------------- mh

struct MhOptions {
  Vector proposal_sd;
  std::size_t n_iter = 10000;
  std::size_t burn_in = 1000;
  bool adapt = true;
  std::uint64_t seed = 0;
  std::optional<Vector> start;  // default: prior mean
};

/// Gaussian random-walk Metropolis-Hastings. Proposals outside the box are
/// rejected without calling `log_post`. BudgetExhausted thrown by
/// `log_post` ends the run with a partial chain.
Chain metropolis_hastings(const LogDensity& log_post, const ParameterSpace& space, const MhOptions& opts);

/// Independent chains with seeds split from opts.seed, run concurrently.
std::vector<Chain> metropolis_hastings_chains(const LogDensity& log_post, const ParameterSpace& space,
                                              const MhOptions& opts, std::size_t n_chains, unsigned threads);

/// log prior + log likelihood of the simulator output (stochastic
/// simulators: m-sample estimator with a fresh seed per call).
LogDensity make_log_posterior(BlackBoxSimulator sim, ObservationSet obs, ParameterSpace space,
                              ModelParams params = {}, std::size_t m = 1, std::uint64_t seed = 0);

// ---------------------------------------------------------------- abc

struct AbcOptions {
  std::size_t n_sims = 10000;
  AcceptanceRule rule = AcceptanceRule::quantile(0.01);
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Rejection ABC. `distance` binds the simulator and the observations;
/// draw i is scored with seed derive_seed(seed, abc_sim, i).
ParticleSet abc_rejection(const ParameterSpace& prior, const ScoreFunction& distance, const AbcOptions& opts);

// ---------------------------------------------------------------- smc

enum class SmcSchedule { tempering, abc_tolerance };

std::string to_string(SmcSchedule s);
SmcSchedule smc_schedule_from_string(const std::string& s);

struct SmcOptions {
  std::size_t n_particles = 1000;
  SmcSchedule schedule = SmcSchedule::tempering;
  bool adaptive = true;
  /// Fixed schedule: increasing temperatures ending at 1, or decreasing
  /// tolerances. Used when adaptive is false.
  std::vector<double> values;
  double target_ess_fraction = 0.5;
  double final_tolerance = 0.0;  // adaptive abc-tolerance stopping point
  std::size_t max_stages = 100;
  int mh_moves = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Tempered SMC from the prior of `space` to prior x likelihood.
ParticleSet smc_tempering(const LogDensity& log_lik, const ParameterSpace& space, const SmcOptions& opts);
/// ABC-SMC with a decreasing tolerance sequence on `distance`.
ParticleSet smc_abc(const ScoreFunction& distance, const ParameterSpace& space, const SmcOptions& opts);

// ---------------------------------------------------------------- history matching

struct NroyReport {
  std::size_t wave = 1;
  Matrix candidates;
  Vector implausibility;
  std::vector<char> accepted;
  double tau = 3.0;
  double retained_fraction = 0.0;  // accepted / candidates of this wave
  double retained_of_initial = 0.0;
  std::size_t new_runs = 0;
  std::vector<std::string> warnings;

  std::size_t n_accepted() const;
  Matrix nroy() const;
};

struct HistoryMatchOptions {
  Vector var_disc;              // empty: zeros
  double tau = 3.0;
  std::size_t n_candidates = 0;  // 0: 200 d
  std::optional<Matrix> candidates;
  DesignMethod design = DesignMethod::latin_hypercube;
  std::size_t wave_count = 1;
  std::size_t runs_per_wave = 20;
  ImplausibilityCombine combine = ImplausibilityCombine::max;
  GpFitOptions gp;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Simulator predictor: var_code = 0 and every wave rescores with the simulator.
std::vector<NroyReport> history_match(const BlackBoxSimulator& sim, const ObservationSet& obs,
                                      const ParameterSpace& space, const HistoryMatchOptions& opts);
/// Emulator predictor (observation-space outputs): later waves run `sim` at
/// accepted candidates, refit on runs inside the previous NROY set and rescore.
std::vector<NroyReport> history_match(const Emulator& emulator, const BlackBoxSimulator& sim,
                                      const ObservationSet& obs, const ParameterSpace& space,
                                      const HistoryMatchOptions& opts);

// ---------------------------------------------------------------- eki

struct GaussianApprox {
  Vector mu;
  Matrix Sigma;
};

struct EkiOptions {
  std::size_t n_ensemble = 100;
  std::size_t n_iterations = 5;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct EkiResult {
  GaussianApprox approx;
  ParticleSet particles;
  Vector bimodality;  // per-coordinate bimodality coefficient
  bool multimodality_risk = false;
};

/// Iterated ensemble Kalman inversion with perturbed observations. Members
/// are clamped into the box of `space` before each simulator call.
EkiResult eki(const BlackBoxSimulator& sim, const ObservationSet& obs, const ParameterSpace& space,
              const Vector& prior_mu, const Matrix& prior_Sigma, const EkiOptions& opts);

/// (g^2 + 1) / (kurtosis + 3 (n-1)^2 / ((n-2)(n-3))); values above 5/9
/// suggest more than one mode.
double bimodality_coefficient(const Vector& sample);

// ---------------------------------------------------------------- vi

struct VariationalParams {
  Vector mu;
  Vector sigma;
};

struct ViOptions {
  std::size_t steps = 3000;
  std::size_t mc_samples = 32;
  double step_size = 0.05;    // Adam base rate
  double decay_steps = 500;   // rate_t = step_size / sqrt(1 + t / decay_steps)
  double baseline_decay = 0.9;
  std::uint64_t seed = 0;
  std::optional<VariationalParams> init;
};

struct ViResult {
  VariationalParams params;
  std::vector<double> elbo;  // one estimate per step
  std::uint64_t evaluations = 0;
};

/// Score-function VI against an unnormalized log target on R^d;
/// ELBO = E_q log target + entropy(q).
ViResult meanfield_vi(const LogDensity& log_target, std::size_t dim, const ViOptions& opts);

/// Score-function VI for prior x likelihood on `space`; ELBO =
/// E_q log_lik(clamp(z)) - KL(q || prior) with the prior KL in closed form
/// (truncated normals as their parent normal, uniforms as flat).
ViResult meanfield_vi(const LogDensity& log_lik, const ParameterSpace& space, const ViOptions& opts);

// ---------------------------------------------------------------- surrogate mh

struct SurrogateMhOptions {
  MhOptions mh;
  /// Simulate when the score-unit predictive variance exceeds this; 0 always
  /// simulates, +inf never does.
  double variance_threshold = 1.0;
  std::size_t refit_every = 10;  // hyperparameter re-optimization period
  GpFitOptions gp;
};

struct SurrogateMhResult {
  Chain chain;
  Ensemble ensemble;   // raw simulator outputs, initial runs first
  Emulator emulator;   // final observation-space emulator
  std::uint64_t sim_calls = 0;
  bool fell_back = false;
  std::vector<std::string> warnings;
};

/// `emulator` maps x to g(f(x)) and was trained on `initial`.
SurrogateMhResult surrogate_mh(const BlackBoxSimulator& sim, const Emulator& emulator, const Ensemble& initial,
                               const ObservationSet& obs, const ParameterSpace& space,
                               const SurrogateMhOptions& opts);

/// Surrogate log likelihood with code variance added to the observation
/// variance (gaussian models only).
double surrogate_log_likelihood(const ObservationSet& obs, const Vector& mean, const Vector& code_var);

/// Predictive variance of the gaussian log likelihood in score units.
double score_variance(const ObservationSet& obs, const Vector& mean, const Vector& code_var);

}  // namespace calibr8
