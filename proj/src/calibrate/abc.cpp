#include <cmath>
#include <limits>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {

ParticleSet abc_rejection(const ParameterSpace& prior, const ScoreFunction& distance, const AbcOptions& opts) {
  const std::size_t n = opts.n_sims, d = prior.dim();
  if (n == 0) throw ParameterError("abc: n_sims must be positive");
  if (opts.rule.provenance == AcceptanceRule::Provenance::quantile && n < 100)
    throw ParameterError("abc: quantile rules need n_sims >= 100");

  Matrix draws(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<double> scores(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    Rng rng = make_rng(opts.seed, stream::abc_prior, i);
    Vector x = prior.sample_prior(rng);
    draws.row(static_cast<Eigen::Index>(i)) = x.transpose();
    double s = distance(x, derive_seed(opts.seed, stream::abc_sim, i));
    scores[i] = std::isnan(s) ? std::numeric_limits<double>::infinity() : s;
  });

  double tau = opts.rule.tau;
  auto keep = accept_all(opts.rule, scores, &tau);
  std::size_t n_acc = 0;
  for (char k : keep) n_acc += k != 0;
  if (n_acc == 0) {
    throw EmptyResultError("abc: no simulation fell below tau = " + std::to_string(tau) +
                           "; increase tau or n_sims");
  }

  Matrix pts(static_cast<Eigen::Index>(n_acc), static_cast<Eigen::Index>(d));
  Vector lp(static_cast<Eigen::Index>(n_acc));
  for (std::size_t i = 0, j = 0; i < n; ++i) {
    if (!keep[i]) continue;
    pts.row(static_cast<Eigen::Index>(j)) = draws.row(static_cast<Eigen::Index>(i));
    lp[static_cast<Eigen::Index>(j)] = -scores[i];
    ++j;
  }
  ParticleSet out = ParticleSet::uniform(std::move(pts), "abc");
  out.log_post = std::move(lp);
  out.meta.schedule = {tau};
  out.meta.accepted = n_acc;
  out.meta.proposed = n;
  return out;
}

}  // namespace calibr8
