#include <cmath>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {

double bimodality_coefficient(const Vector& x) {
  const double n = static_cast<double>(x.size());
  if (n < 4) throw ParameterError("bimodality coefficient needs at least 4 values");
  Vector c = x.array() - x.mean();
  double m2 = c.array().square().mean();
  if (!(m2 > 0)) return 0.0;
  double m3 = c.array().cube().mean(), m4 = c.array().square().square().mean();
  double g = m3 / std::pow(m2, 1.5);
  double kurt = m4 / (m2 * m2) - 3.0;
  // Sample-size corrected skewness and excess kurtosis.
  double G = g * std::sqrt(n * (n - 1)) / (n - 2);
  double K = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * kurt + 6);
  return (G * G + 1) / (K + 3 * (n - 1) * (n - 1) / ((n - 2) * (n - 3)));
}

EkiResult eki(const BlackBoxSimulator& sim, const ObservationSet& obs, const ParameterSpace& space,
              const Vector& prior_mu, const Matrix& prior_Sigma, const EkiOptions& opts) {
  const auto d = static_cast<Eigen::Index>(space.dim());
  const auto n = static_cast<Eigen::Index>(obs.size());
  const std::size_t J = opts.n_ensemble;
  if (J < space.dim() + 2) throw ParameterError("eki: n_ensemble must be at least d + 2");
  if (opts.n_iterations < 1) throw ParameterError("eki: n_iterations must be at least 1");
  if (prior_mu.size() != d || prior_Sigma.rows() != d || prior_Sigma.cols() != d)
    throw ParameterError("eki: prior dimensions do not match the parameter space");

  Matrix noise_cov;
  switch (obs.model.kind) {
    case ObservationModel::Kind::gaussian_iid: {
      Vector v = observation_variance(obs);
      noise_cov = v.asDiagonal();
      break;
    }
    case ObservationModel::Kind::gaussian_correlated:
      noise_cov = obs.model.covariance;
      break;
    default:
      throw ParameterError("eki requires a gaussian observation model");
  }
  const double inflation = static_cast<double>(opts.n_iterations);
  Eigen::LLT<Matrix> noise_llt(noise_cov * inflation);
  if (noise_llt.info() != Eigen::Success) throw ConditioningError("eki: observation covariance is not positive definite");
  const Matrix noise_L = noise_llt.matrixL();

  Eigen::LLT<Matrix> prior_llt(prior_Sigma);
  if (prior_llt.info() != Eigen::Success) throw ConditioningError("eki: prior covariance is not positive definite");
  const Matrix prior_L = prior_llt.matrixL();

  const auto Je = static_cast<Eigen::Index>(J);
  Matrix X(Je, d);
  for (std::size_t i = 0; i < J; ++i) {
    Rng rng = make_rng(opts.seed, stream::eki, i);
    std::normal_distribution<double> normal;
    Vector z(d);
    for (auto& v : z) v = normal(rng);
    X.row(static_cast<Eigen::Index>(i)) = (prior_mu + prior_L * z).transpose();
  }

  Matrix G(Je, n);
  for (std::size_t it = 0; it < opts.n_iterations; ++it) {
    parallel_for(J, opts.threads, [&](std::size_t i) {
      const auto r = static_cast<Eigen::Index>(i);
      Vector x = space.clamp(X.row(r).transpose());
      X.row(r) = x.transpose();
      std::uint64_t s = derive_seed(derive_seed(opts.seed, stream::eki_sim, it), stream::eki_sim, i);
      G.row(r) = apply_operator(obs.op, evaluate(sim, x, obs.control, s)).transpose();
    });
    Vector xm = X.colwise().mean().transpose(), gm = G.colwise().mean().transpose();
    Matrix Xc = X.rowwise() - xm.transpose(), Gc = G.rowwise() - gm.transpose();
    const double scale = 1.0 / static_cast<double>(J - 1);
    Matrix Cxg = scale * Xc.transpose() * Gc;
    Matrix S = scale * Gc.transpose() * Gc + noise_cov * inflation;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0).all())
      throw ConditioningError("eki: predicted-observation covariance is singular");
    Matrix K = llt.solve(Cxg.transpose()).transpose();  // d x n

    for (std::size_t i = 0; i < J; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      Rng rng = make_rng(derive_seed(opts.seed, stream::eki, it + 1), stream::eki, i);
      std::normal_distribution<double> normal;
      Vector z(n);
      for (auto& v : z) v = normal(rng);
      Vector innov = obs.y + noise_L * z - G.row(r).transpose();
      X.row(r) += (K * innov).transpose();
    }
  }

  for (Eigen::Index r = 0; r < Je; ++r) X.row(r) = space.clamp(X.row(r).transpose()).transpose();

  EkiResult res;
  res.particles = ParticleSet::uniform(X, "eki");
  res.approx.mu = X.colwise().mean().transpose();
  Matrix Xc = X.rowwise() - res.approx.mu.transpose();
  res.approx.Sigma = Xc.transpose() * Xc / static_cast<double>(J - 1);
  res.approx.Sigma = 0.5 * (res.approx.Sigma + res.approx.Sigma.transpose());
  if (Eigen::LLT<Matrix>(res.approx.Sigma).info() != Eigen::Success)
    throw ConditioningError("eki: final ensemble covariance is not positive definite (ensemble collapsed)");
  res.bimodality.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    res.bimodality[k] = bimodality_coefficient(X.col(k));
    if (res.bimodality[k] > 5.0 / 9.0) res.multimodality_risk = true;
  }
  if (res.multimodality_risk)
    res.particles.meta.warnings.push_back("ensemble looks multimodal; the Gaussian approximation may be poor");
  return res;
}

}  // namespace calibr8
