#include "calibr8/predict.hpp"

#include <algorithm>
#include <cmath>

#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {

double sample_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ParameterError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  double h = p * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double crps_ensemble(std::vector<double> x, double y) {
  if (x.empty()) throw ParameterError("crps of an empty sample");
  std::sort(x.begin(), x.end());
  const double m = static_cast<double>(x.size());
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    a += std::abs(x[i] - y);
    b += (2.0 * static_cast<double>(i + 1) - m - 1.0) * x[i];
  }
  return a / m - b / (m * m);
}

PredictiveSample calibrated_predict(const BlackBoxSimulator& sim, const ParticleSet& posterior, const ControlInput& u_p,
                                    const ObservationSet& obs, const PredictOptions& opts,
                                    const std::optional<PredictionDiscrepancy>& discrepancy) {
  if (posterior.size() == 0) throw ParameterError("calibrated_predict: the posterior is empty");
  if (opts.draws == 0) throw ParameterError("calibrated_predict: draws must be positive");
  const std::size_t M = opts.draws;
  const auto n = static_cast<Eigen::Index>(obs.size());

  PredictiveSample out;
  out.control = u_p;
  out.source = posterior.meta.method;
  out.source_ess = posterior.ess();
  if (out.source_ess < 10)
    out.warnings.push_back("posterior effective sample size " + std::to_string(out.source_ess) +
                           " is below 10; predictive spread may be underestimated");

  Rng rs = make_rng(opts.seed, stream::predict, 0);
  auto idx = multinomial_resample(posterior.weights, M, rs);

  Vector d_mean;
  Matrix d_L;
  if (discrepancy) {
    if (discrepancy->locations.rows() != n)
      throw ParameterError("calibrated_predict: discrepancy locations must match the observation count");
    Matrix cov;
    discrepancy->gp.predict_joint(discrepancy->locations, d_mean, cov);
    cov.diagonal().array() += 1e-10 * std::max(1.0, cov.diagonal().maxCoeff());
    Eigen::LDLT<Matrix> ld(cov);
    Vector dd = ld.vectorD().cwiseMax(0.0).cwiseSqrt();
    d_L = ld.transpositionsP().transpose() * Matrix(ld.matrixL()) * dd.asDiagonal();
  }

  out.draws.resize(static_cast<Eigen::Index>(M), n);
  parallel_for(M, opts.threads, [&](std::size_t j) {
    Vector x = posterior.points.row(static_cast<Eigen::Index>(idx[j])).transpose();
    Vector pred = apply_operator(obs.op, evaluate(sim, x, u_p, derive_seed(opts.seed, stream::predict_sim, j)));
    if (pred.size() != n)
      throw ParameterError("calibrated_predict: operator output length differs from the observation set");
    Rng rng = make_rng(opts.seed, stream::predict, j + 1);
    if (discrepancy) {
      std::normal_distribution<double> normal;
      Vector z(n);
      for (auto& v : z) v = normal(rng);
      pred += d_mean + d_L * z;
    }
    if (opts.add_noise) pred += sample_noise(obs, rng);
    out.draws.row(static_cast<Eigen::Index>(j)) = pred.transpose();
  });

  out.q05.resize(n);
  out.q50.resize(n);
  out.q95.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    std::vector<double> col(out.draws.col(k).data(), out.draws.col(k).data() + M);
    out.q05[k] = sample_quantile(col, 0.05);
    out.q50[k] = sample_quantile(col, 0.50);
    out.q95[k] = sample_quantile(col, 0.95);
  }
  return out;
}

PredictiveSample calibrated_predict(const BlackBoxSimulator& sim, const Chain& posterior, const ControlInput& u_p,
                                    const ObservationSet& obs, const PredictOptions& opts,
                                    const std::optional<PredictionDiscrepancy>& discrepancy) {
  return calibrated_predict(sim, posterior.to_particles(), u_p, obs, opts, discrepancy);
}

HoldoutReport holdout_validate(const PredictiveSample& pred, const Vector& y_test, std::span<const double> levels) {
  const auto n = static_cast<Eigen::Index>(pred.outputs());
  if (y_test.size() != n)
    throw ParameterError("holdout_validate: y_test has " + std::to_string(y_test.size()) + " entries but draws have " +
                         std::to_string(n) + " outputs");
  for (double l : levels)
    if (!(l > 0 && l < 1)) throw ParameterError("holdout_validate: levels must lie in (0, 1)");
  HoldoutReport rep;
  rep.levels.assign(levels.begin(), levels.end());
  rep.coverage = Vector::Zero(static_cast<Eigen::Index>(levels.size()));
  rep.covered.assign(levels.size(), std::vector<char>(static_cast<std::size_t>(n), 0));
  rep.crps.resize(n);
  rep.outside_99.assign(static_cast<std::size_t>(n), 0);
  const auto M = pred.size();
  if (M < 20) {
    rep.reliable = false;
    rep.warnings.push_back("fewer than 20 predictive draws; coverage is unreliable");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    std::vector<double> col(pred.draws.col(k).data(), pred.draws.col(k).data() + M);
    std::sort(col.begin(), col.end());
    const double y = y_test[k];
    for (std::size_t l = 0; l < levels.size(); ++l) {
      double lo = sample_quantile(col, 0.5 - 0.5 * levels[l]), hi = sample_quantile(col, 0.5 + 0.5 * levels[l]);
      bool in = y >= lo && y <= hi;
      rep.covered[l][static_cast<std::size_t>(k)] = in;
      rep.coverage[static_cast<Eigen::Index>(l)] += in ? 1.0 : 0.0;
    }
    double lo = sample_quantile(col, 0.005), hi = sample_quantile(col, 0.995);
    rep.outside_99[static_cast<std::size_t>(k)] = y < lo || y > hi;
    rep.crps[k] = crps_ensemble(col, y);
  }
  if (n > 0) rep.coverage /= static_cast<double>(n);
  return rep;
}

}  // namespace calibr8
