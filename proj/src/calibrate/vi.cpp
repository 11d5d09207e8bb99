#include <cmath>
#include <limits>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"

namespace calibr8 {

namespace {

/// -KL(q || p) as a function of (mu, log sigma) and its gradient, up to a
/// constant.
using NegKl = std::function<double(const Vector& mu, const Vector& rho, Vector& g_mu, Vector& g_rho)>;

constexpr int kMaxDivergentSteps = 25;
const double kHalfLog2PiE = 0.5 * std::log(2 * M_PI * M_E);

/// Optional limits on (mu, log sigma), applied after every step.
struct Limits {
  Vector mu_lo, mu_hi, rho_hi;
};

ViResult run_vi(const std::function<double(const Vector&)>& f, const NegKl& neg_kl, VariationalParams init,
                const ViOptions& o, const Limits* lim = nullptr) {
  const Eigen::Index d = init.mu.size();
  if (o.steps < 4) throw ParameterError("vi needs at least 4 steps");
  if (o.mc_samples < 2) throw ParameterError("vi needs at least 2 samples per step");
  if (!(init.sigma.array() > 0).all()) throw ParameterError("vi initial sigma must be positive");

  const double inf = std::numeric_limits<double>::infinity();
  Vector mu = init.mu, rho = init.sigma.array().log();
  const Eigen::Index P = 2 * d;
  Vector m1 = Vector::Zero(P), m2 = Vector::Zero(P);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  Rng rng = make_rng(o.seed, stream::vi);
  std::normal_distribution<double> normal;
  const std::size_t S = o.mc_samples;
  Matrix E(static_cast<Eigen::Index>(S), d);
  Vector fv(static_cast<Eigen::Index>(S));

  ViResult res;
  res.elbo.reserve(o.steps);
  double baseline = 0.0;
  bool have_baseline = false;
  int divergent = 0;
  const std::size_t avg_from = o.steps - o.steps / 4;
  Vector mu_avg = Vector::Zero(d), rho_avg = Vector::Zero(d);
  std::size_t n_avg = 0;

  for (std::size_t t = 0; t < o.steps; ++t) {
    Vector sigma = rho.array().exp();
    bool finite = true;
    for (std::size_t s = 0; s < S; ++s) {
      const auto r = static_cast<Eigen::Index>(s);
      for (Eigen::Index k = 0; k < d; ++k) E(r, k) = normal(rng);
      Vector z = mu + sigma.cwiseProduct(E.row(r).transpose());
      fv[r] = f(z);
      ++res.evaluations;
      if (!std::isfinite(fv[r])) finite = false;
    }
    Vector gk_mu(d), gk_rho(d);
    double nkl = neg_kl(mu, rho, gk_mu, gk_rho);
    if (!finite || !std::isfinite(nkl)) {
      res.elbo.push_back(-inf);
      if (++divergent >= kMaxDivergentSteps)
        throw CalibrationError("vi: ELBO diverged to -inf; use a smaller step_size or a better initialization");
    } else {
      divergent = 0;
      const double mean_f = fv.mean();
      res.elbo.push_back(mean_f + nkl);
      if (!have_baseline) {
        baseline = mean_f;
        have_baseline = true;
      }
      Vector g(P);
      Vector centred = fv.array() - baseline;
      g.head(d) = (E.transpose() * centred).cwiseQuotient(sigma) / static_cast<double>(S) + gk_mu;
      g.tail(d) = ((E.array().square() - 1.0).matrix().transpose() * centred) / static_cast<double>(S) + gk_rho;
      baseline = o.baseline_decay * baseline + (1.0 - o.baseline_decay) * mean_f;

      // Adam ascent with decaying rate.
      m1 = b1 * m1 + (1 - b1) * g;
      m2 = b2 * m2 + (1 - b2) * g.cwiseAbs2();
      const double tt = static_cast<double>(t + 1);
      const double lr = o.step_size / std::sqrt(1.0 + static_cast<double>(t) / o.decay_steps);
      Vector step = lr * (m1 / (1 - std::pow(b1, tt))).cwiseQuotient(
                             ((m2 / (1 - std::pow(b2, tt))).cwiseSqrt().array() + eps).matrix());
      mu += step.head(d);
      rho += step.tail(d);
      if (lim) {
        mu = mu.cwiseMax(lim->mu_lo).cwiseMin(lim->mu_hi);
        rho = rho.cwiseMin(lim->rho_hi);
      }
    }
    if (t >= avg_from) {
      mu_avg += mu;
      rho_avg += rho;
      ++n_avg;
    }
  }
  res.params.mu = mu_avg / static_cast<double>(n_avg);
  res.params.sigma = (rho_avg / static_cast<double>(n_avg)).array().exp();
  return res;
}

}  // namespace

ViResult meanfield_vi(const LogDensity& log_target, std::size_t dim, const ViOptions& opts) {
  const auto d = static_cast<Eigen::Index>(dim);
  VariationalParams init = opts.init.value_or(VariationalParams{Vector::Zero(d), Vector::Ones(d)});
  if (init.mu.size() != d || init.sigma.size() != d) throw ParameterError("vi initial parameters have the wrong size");
  NegKl entropy = [](const Vector&, const Vector& rho, Vector& g_mu, Vector& g_rho) {
    g_mu.setZero();
    g_rho.setOnes();
    return rho.sum() + static_cast<double>(rho.size()) * kHalfLog2PiE;
  };
  return run_vi(log_target, entropy, init, opts);
}

ViResult meanfield_vi(const LogDensity& log_lik, const ParameterSpace& space, const ViOptions& opts) {
  const auto d = static_cast<Eigen::Index>(space.dim());
  VariationalParams init =
      opts.init.value_or(VariationalParams{space.prior_mean(), space.prior_sd()});
  if (init.mu.size() != d || init.sigma.size() != d) throw ParameterError("vi initial parameters have the wrong size");
  NegKl neg_kl = [&space, d](const Vector& mu, const Vector& rho, Vector& g_mu, Vector& g_rho) {
    double v = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const Dimension& dm = space[static_cast<std::size_t>(k)];
      const double s2 = std::exp(2 * rho[k]);
      if (dm.prior.kind == PriorSpec::Kind::truncated_normal) {
        const double p2 = dm.prior.sd * dm.prior.sd, diff = mu[k] - dm.prior.mean;
        v += rho[k] - std::log(dm.prior.sd) - (s2 + diff * diff) / (2 * p2) + 0.5;
        g_mu[k] = -diff / p2;
        g_rho[k] = 1.0 - s2 / p2;
      } else {
        v += rho[k] + kHalfLog2PiE - std::log(dm.upper - dm.lower);
        g_mu[k] = 0.0;
        g_rho[k] = 1.0;
      }
    }
    return v;
  };
  // sigma capped at the box width on uniform coordinates
  Limits lim{space.lower(), space.upper(), Vector::Constant(d, std::numeric_limits<double>::infinity())};
  for (Eigen::Index k = 0; k < d; ++k)
    if (space[static_cast<std::size_t>(k)].prior.kind == PriorSpec::Kind::uniform)
      lim.rho_hi[k] = std::log(space.upper()[k] - space.lower()[k]);
  auto f = [&space, &log_lik](const Vector& z) { return log_lik(space.clamp(z)); };
  return run_vi(f, neg_kl, init, opts, &lim);
}

}  // namespace calibr8
