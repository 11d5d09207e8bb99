#include "calibr8/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calibr8/error.hpp"
#include "calibr8/simd.hpp"

namespace calibr8 {

double neg_log_lik_score(const Vector& x, const BlackBoxSimulator& sim, const ObservationSet& obs,
                         const ModelParams& params, std::uint64_t seed, std::size_t m) {
  if (sim.stochastic()) return -log_likelihood_stochastic(sim, obs, x, m, seed, params).value;
  Vector f = evaluate(sim, x, obs.control, seed);
  return -log_likelihood(obs, apply_operator(obs.op, f), params);
}

ScoreFunction make_neg_log_lik_score(BlackBoxSimulator sim, ObservationSet obs, ModelParams params, std::size_t m) {
  return ScoreFunction(ScoreFunction::Kind::neg_log_lik,
                       [sim = std::move(sim), obs = std::move(obs), params = std::move(params), m](
                           const Vector& x, std::uint64_t seed) { return neg_log_lik_score(x, sim, obs, params, seed, m); });
}

double implausibility(double y, double mean, double var_obs, double var_disc, double var_code) {
  if (var_obs < 0 || var_disc < 0 || var_code < 0) throw NumericError("implausibility: negative variance");
  double v = var_obs + var_disc + var_code;
  if (!(v > 0)) throw NumericError("implausibility: zero total variance");
  return std::abs(y - mean) / std::sqrt(v);
}

namespace {

Vector total_variance(const Vector& var_obs, const Vector& var_disc, const Vector& var_code) {
  const Eigen::Index n = var_obs.size();
  auto at = [](const Vector& v, Eigen::Index i) { return v.size() == 0 ? 0.0 : v[i]; };
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = var_obs[i], b = at(var_disc, i), c = at(var_code, i);
    if (a < 0 || b < 0 || c < 0) throw NumericError("implausibility: negative variance at output " + std::to_string(i));
    v[i] = a + b + c;
    if (!(v[i] > 0)) throw NumericError("implausibility: zero total variance at output " + std::to_string(i));
  }
  return v;
}

}  // namespace

Vector implausibility(const Vector& y, const Vector& mean, const Vector& var_obs, const Vector& var_disc,
                      const Vector& var_code) {
  Vector v = total_variance(var_obs, var_disc, var_code);
  return (y - mean).cwiseAbs().cwiseQuotient(v.cwiseSqrt());
}

double combined_implausibility(const Vector& y, const Vector& mean, const Vector& var_obs, const Vector& var_disc,
                               const Vector& var_code, ImplausibilityCombine how) {
  Vector v = total_variance(var_obs, var_disc, var_code);
  const auto n = static_cast<std::size_t>(y.size());
  if (how == ImplausibilityCombine::max || n < 2)
    return simd::max_standardized({y.data(), n}, {mean.data(), n}, {v.data(), n});
  Vector I = (y - mean).cwiseAbs().cwiseQuotient(v.cwiseSqrt());
  std::vector<double> s(I.data(), I.data() + I.size());
  std::nth_element(s.begin(), s.begin() + 1, s.end(), std::greater<>());
  return s[1];
}

ScoreFunction make_implausibility_score(BlackBoxSimulator sim, ObservationSet obs, Vector var_disc,
                                        ImplausibilityCombine how) {
  Vector var_obs = observation_variance(obs);
  return ScoreFunction(ScoreFunction::Kind::implausibility_max,
                       [sim = std::move(sim), obs = std::move(obs), var_disc = std::move(var_disc),
                        var_obs = std::move(var_obs), how](const Vector& x, std::uint64_t seed) {
                         Vector pred = apply_operator(obs.op, evaluate(sim, x, obs.control, seed));
                         return combined_implausibility(obs.y, pred, var_obs, var_disc, Vector(), how);
                       });
}

ScoreFunction make_implausibility_score(Emulator emulator, ObservationSet obs, Vector var_disc,
                                        ImplausibilityCombine how) {
  Vector var_obs = observation_variance(obs);
  return ScoreFunction(ScoreFunction::Kind::implausibility_max,
                       [em = std::move(emulator), obs = std::move(obs), var_disc = std::move(var_disc),
                        var_obs = std::move(var_obs), how](const Vector& x, std::uint64_t) {
                         Vector mean, var;
                         em.predict(x, mean, var);
                         return combined_implausibility(obs.y, mean, var_obs, var_disc, var, how);
                       });
}

ScoreFunction make_summary_distance_score(BlackBoxSimulator sim, ObservationSet obs, SummaryStatistic T,
                                          DistanceMetric metric, Vector weights) {
  Vector ty = summarize(T, obs.y);
  if (metric == DistanceMetric::scaled_euclidean) {
    if (weights.size() != ty.size())
      throw ConfigurationError("scaled-euclidean needs one weight per summary", "distance.weights");
    if ((weights.array() < 0).any()) throw ConfigurationError("weights must be nonnegative", "distance.weights");
  } else {
    weights = Vector::Ones(ty.size());
  }
  return ScoreFunction(ScoreFunction::Kind::summary_distance,
                       [sim = std::move(sim), obs = std::move(obs), T = std::move(T), ty = std::move(ty),
                        w = std::move(weights)](const Vector& x, std::uint64_t seed) {
                         Vector f = evaluate(sim, x, obs.control, seed);
                         Vector tf = summarize(T, apply_operator(obs.op, f));
                         const auto k = static_cast<std::size_t>(tf.size());
                         return std::sqrt(simd::weighted_sq_sum({tf.data(), k}, {ty.data(), k}, {w.data(), k}));
                       });
}

AcceptanceRule AcceptanceRule::quantile(double alpha) {
  if (!(alpha > 0 && alpha <= 1)) throw ParameterError("quantile rule needs alpha in (0, 1]");
  return {std::numeric_limits<double>::quiet_NaN(), Provenance::quantile, alpha};
}

bool accept(const AcceptanceRule& rule, double score) {
  if (rule.provenance == AcceptanceRule::Provenance::quantile && std::isnan(rule.tau))
    throw ParameterError("quantile acceptance rule has not been resolved against a score set");
  double tau = rule.provenance == AcceptanceRule::Provenance::three_sigma ? 3.0 : rule.tau;
  return score < tau;
}

double quantile_threshold(double alpha, std::span<const double> scores) {
  if (scores.empty()) throw ParameterError("quantile threshold of an empty score set");
  if (!(alpha > 0 && alpha <= 1)) throw ParameterError("quantile rule needs alpha in (0, 1]");
  std::vector<double> s;
  s.reserve(scores.size());
  for (double v : scores)
    if (!std::isnan(v)) s.push_back(v);
  if (s.empty()) throw ParameterError("every score is NaN");
  auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(scores.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, s.size());
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k - 1), s.end());
  return std::nextafter(s[k - 1], std::numeric_limits<double>::infinity());
}

std::vector<char> accept_all(const AcceptanceRule& rule, std::span<const double> scores, double* tau_out) {
  AcceptanceRule r = rule;
  if (r.provenance == AcceptanceRule::Provenance::quantile) r.tau = quantile_threshold(r.alpha, scores);
  if (r.provenance == AcceptanceRule::Provenance::three_sigma) r.tau = 3.0;
  if (tau_out) *tau_out = r.tau;
  std::vector<char> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = accept(r, scores[i]);
  return out;
}

}  // namespace calibr8
