#include "calibr8/calibrate/particles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calibr8/error.hpp"
#include "calibr8/simd.hpp"

namespace calibr8 {

double effective_sample_size(const Vector& w) {
  double s = w.sum();
  if (!(s > 0)) return 0.0;
  return s * s / w.squaredNorm();
}

Vector normalize_log_weights(const Vector& logw) {
  const auto n = static_cast<std::size_t>(logw.size());
  double m = simd::max_value({logw.data(), n});
  if (!std::isfinite(m)) throw DegeneracyError("all particle weights are zero");
  Vector w = (logw.array() - m).exp();
  return w / w.sum();
}

std::vector<std::size_t> systematic_resample(const Vector& w, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(m);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double step = w.sum() / static_cast<double>(m);
  double u = unif(rng) * step, cum = w[0];
  std::size_t j = 0;
  const auto n = static_cast<std::size_t>(w.size());
  for (std::size_t i = 0; i < m; ++i) {
    while (u > cum && j + 1 < n) cum += w[static_cast<Eigen::Index>(++j)];
    idx[i] = j;
    u += step;
  }
  return idx;
}

std::vector<std::size_t> multinomial_resample(const Vector& w, std::size_t m, Rng& rng) {
  std::vector<double> cum(static_cast<std::size_t>(w.size()));
  double c = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) cum[static_cast<std::size_t>(i)] = (c += w[i]);
  std::uniform_real_distribution<double> unif(0.0, c);
  std::vector<std::size_t> idx(m);
  for (auto& k : idx) {
    auto it = std::upper_bound(cum.begin(), cum.end(), unif(rng));
    k = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
  }
  return idx;
}

double ParticleSet::ess() const { return effective_sample_size(weights); }

Vector ParticleSet::mean() const {
  Vector m(points.cols());
  const auto n = size();
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    auto mo = simd::weighted_moments({points.col(k).data(), n}, {weights.data(), n});
    m[k] = mo.sum_wv / mo.sum_w;
  }
  return m;
}

Vector ParticleSet::variance() const {
  Vector v(points.cols());
  const auto n = size();
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    auto mo = simd::weighted_moments({points.col(k).data(), n}, {weights.data(), n});
    double mu = mo.sum_wv / mo.sum_w;
    v[k] = std::max(0.0, mo.sum_wv2 / mo.sum_w - mu * mu);
  }
  return v;
}

Matrix ParticleSet::covariance() const {
  Vector mu = mean();
  Matrix c = points.rowwise() - mu.transpose();
  return c.transpose() * weights.asDiagonal() * c / weights.sum();
}

double ParticleSet::acceptance_rate() const {
  return meta.proposed ? static_cast<double>(meta.accepted) / static_cast<double>(meta.proposed) : 0.0;
}

ParticleSet ParticleSet::uniform(Matrix points, std::string method) {
  ParticleSet p;
  const auto n = points.rows();
  p.points = std::move(points);
  p.weights = Vector::Constant(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  p.meta.method = std::move(method);
  return p;
}

Vector Chain::mean() const { return states.colwise().mean().transpose(); }

Vector Chain::variance() const {
  Vector mu = mean();
  return ((states.rowwise() - mu.transpose()).array().square().colwise().sum() /
          std::max<double>(1.0, static_cast<double>(states.rows() - 1)))
      .transpose();
}

ParticleSet Chain::to_particles() const {
  ParticleSet p = ParticleSet::uniform(states, "mh");
  p.log_post = log_post;
  p.meta.accepted = accepted;
  p.meta.proposed = proposed;
  p.meta.n_sim_evals = n_sim_evals;
  p.meta.partial = partial;
  p.meta.warnings = warnings;
  return p;
}

double series_ess(const Vector& x) {
  const Eigen::Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  Vector c = x.array() - x.mean();
  double c0 = c.squaredNorm() / static_cast<double>(n);
  if (!(c0 > 0)) return static_cast<double>(n);
  auto rho = [&](Eigen::Index lag) {
    return c.head(n - lag).dot(c.tail(n - lag)) / (static_cast<double>(n) * c0);
  };
  // Geyer: sum consecutive pairs while positive, enforcing monotonicity.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    double pair = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (pair <= 0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

double series_mcse(const Vector& x) {
  const double n = static_cast<double>(x.size());
  double var = (x.array() - x.mean()).square().sum() / std::max(1.0, n - 1.0);
  return std::sqrt(var / series_ess(x));
}

double split_rhat(const std::vector<Vector>& chains) {
  std::vector<Vector> halves;
  for (const auto& c : chains) {
    Eigen::Index h = c.size() / 2;
    if (h < 2) throw ParameterError("split_rhat needs chains of length >= 4");
    halves.push_back(c.head(h));
    halves.push_back(c.segment(h, h));
  }
  const double m = static_cast<double>(halves.size());
  const double n = static_cast<double>(halves[0].size());
  Vector means(static_cast<Eigen::Index>(halves.size())), vars(means.size());
  for (std::size_t j = 0; j < halves.size(); ++j) {
    const auto& h = halves[j];
    means[static_cast<Eigen::Index>(j)] = h.mean();
    vars[static_cast<Eigen::Index>(j)] = (h.array() - h.mean()).square().sum() / (n - 1.0);
  }
  double B = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
  double W = vars.mean();
  double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

}  // namespace calibr8
