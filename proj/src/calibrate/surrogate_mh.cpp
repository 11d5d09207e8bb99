#include <cmath>
#include <limits>
#include <numbers>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"

namespace calibr8 {

namespace {

void require_gaussian(const ObservationSet& obs) {
  if (obs.model.kind != ObservationModel::Kind::gaussian_iid &&
      obs.model.kind != ObservationModel::Kind::gaussian_correlated)
    throw ParameterError("surrogate likelihood requires a gaussian observation model");
}

Vector diag_variance(const ObservationSet& obs) {
  if (obs.model.kind == ObservationModel::Kind::gaussian_correlated) return obs.model.covariance.diagonal();
  return observation_variance(obs);
}

}  // namespace

double surrogate_log_likelihood(const ObservationSet& obs, const Vector& mean, const Vector& code_var) {
  require_gaussian(obs);
  const Vector r = obs.y - mean;
  if (obs.model.kind == ObservationModel::Kind::gaussian_iid) {
    Vector v = observation_variance(obs) + code_var;
    return -0.5 * ((r.array().square() / v.array()).sum() + (2 * std::numbers::pi * v.array()).log().sum());
  }
  Matrix C = obs.model.covariance;
  C.diagonal() += code_var;
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success) throw ConditioningError("surrogate likelihood covariance is not positive definite");
  Vector z = llt.matrixL().solve(r);
  double logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet + static_cast<double>(r.size()) * std::log(2 * std::numbers::pi));
}

double score_variance(const ObservationSet& obs, const Vector& mean, const Vector& code_var) {
  require_gaussian(obs);
  Vector s2 = diag_variance(obs);
  Vector r2 = (obs.y - mean).array().square();
  Vector s4 = s2.array().square();
  return ((r2.array() * code_var.array() + 0.5 * code_var.array().square()) / s4.array()).sum();
}

SurrogateMhResult surrogate_mh(const BlackBoxSimulator& sim, const Emulator& emulator, const Ensemble& initial,
                               const ObservationSet& obs, const ParameterSpace& space,
                               const SurrogateMhOptions& opts) {
  require_gaussian(obs);
  if (emulator.outputs() != obs.size())
    throw ParameterError("surrogate_mh: emulator must have one output per observation");
  if (initial.size() == 0) throw ParameterError("surrogate_mh: the initial ensemble is empty");
  if (std::isnan(opts.variance_threshold)) throw ParameterError("surrogate_mh: variance_threshold is NaN");

  const auto n_out = static_cast<Eigen::Index>(obs.size());
  SurrogateMhResult res;
  res.ensemble = initial;
  res.emulator = emulator;

  Matrix X = initial.inputs;
  Matrix Y(X.rows(), n_out);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    Y.row(i) = apply_operator(obs.op, initial.outputs.row(i).transpose()).transpose();

  bool always_simulate = opts.variance_threshold <= 0;
  std::size_t new_runs = 0;

  LogDensity log_post = [&](const Vector& x) -> double {
    double lp = space.log_prior(x);
    if (!std::isfinite(lp)) return lp;
    Vector mean, var;
    if (!always_simulate) {
      res.emulator.predict(x, mean, var);
      if (!(score_variance(obs, mean, var) > opts.variance_threshold))
        return lp + surrogate_log_likelihood(obs, mean, var);
    }
    Vector f = evaluate(sim, x, obs.control, derive_seed(opts.mh.seed, stream::surrogate, res.sim_calls));
    ++res.sim_calls;
    res.ensemble.append(x, obs.control, f);
    Vector pred = apply_operator(obs.op, f);
    if (!always_simulate) {
      X.conservativeResize(X.rows() + 1, Eigen::NoChange);
      Y.conservativeResize(Y.rows() + 1, Eigen::NoChange);
      X.row(X.rows() - 1) = x.transpose();
      Y.row(Y.rows() - 1) = pred.transpose();
      ++new_runs;
      try {
        if (opts.refit_every > 0 && new_runs % opts.refit_every == 0) {
          GpFitOptions gpo = opts.gp;
          gpo.seed = derive_seed(opts.mh.seed, stream::gp_fit, new_runs);
          res.emulator = Emulator::fit(X, Y, gpo);
        } else {
          res.emulator = res.emulator.conditioned(X, Y);
        }
      } catch (const NumericError& e) {
        always_simulate = true;
        res.fell_back = true;
        res.warnings.push_back(std::string("emulator refit failed, switching to always-simulate: ") + e.what());
      }
    }
    return lp + log_likelihood(obs, pred);
  };

  res.chain = metropolis_hastings(log_post, space, opts.mh);
  res.chain.n_sim_evals = res.sim_calls;
  for (auto& w : res.warnings) res.chain.warnings.push_back(w);
  return res;
}

}  // namespace calibr8
