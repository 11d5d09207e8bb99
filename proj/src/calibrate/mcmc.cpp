#include <cmath>
#include <sstream>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {

namespace {

std::string format_point(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

double checked(const LogDensity& f, const Vector& x) {
  double v = f(x);
  if (std::isnan(v)) throw CalibrationError("log posterior is NaN at x = " + format_point(x));
  return v;
}

constexpr std::size_t kAdaptBatch = 50;

}  // namespace

Chain metropolis_hastings(const LogDensity& log_post, const ParameterSpace& space, const MhOptions& opts) {
  const std::size_t d = space.dim();
  if (opts.n_iter <= opts.burn_in) throw ParameterError("mh: n_iter must exceed burn_in");
  if (static_cast<std::size_t>(opts.proposal_sd.size()) != d)
    throw ParameterError("mh: proposal_sd must have one entry per dimension");
  if ((opts.proposal_sd.array() <= 0).any() || !opts.proposal_sd.allFinite())
    throw ParameterError("mh: proposal_sd entries must be positive");

  Rng rng = make_rng(opts.seed, stream::mcmc);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Chain chain;
  chain.burn_in = opts.burn_in;
  const std::size_t kept = opts.n_iter - opts.burn_in;
  chain.states.resize(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(d));
  chain.log_post.resize(static_cast<Eigen::Index>(kept));

  Vector x = opts.start ? *opts.start : space.prior_mean();
  space.check_contains(x);
  Vector scale = opts.proposal_sd;
  std::size_t stored = 0;
  std::size_t batch_accepted = 0, batch_seen = 0;

  try {
    double lp = checked(log_post, x);
    if (!std::isfinite(lp)) throw CalibrationError("log posterior is not finite at the start point " + format_point(x));

    Vector prop(d);
    for (std::size_t t = 0; t < opts.n_iter; ++t) {
      for (std::size_t k = 0; k < d; ++k)
        prop[static_cast<Eigen::Index>(k)] = x[static_cast<Eigen::Index>(k)] +
                                             scale[static_cast<Eigen::Index>(k)] * normal(rng);
      double u = unif(rng);
      bool accepted = false;
      if (space.contains(prop)) {
        double lp_new = checked(log_post, prop);
        if (std::log(u) < lp_new - lp) {
          x = prop;
          lp = lp_new;
          accepted = true;
        }
      }
      if (t < opts.burn_in) {
        if (opts.adapt) {
          batch_accepted += accepted;
          if (++batch_seen == kAdaptBatch) {
            double rate = static_cast<double>(batch_accepted) / kAdaptBatch;
            if (rate < 0.2) scale *= 0.75;
            else if (rate > 0.5) scale *= 1.33;
            batch_accepted = batch_seen = 0;
          }
        }
        continue;
      }
      ++chain.proposed;
      chain.accepted += accepted;
      chain.states.row(static_cast<Eigen::Index>(stored)) = x.transpose();
      chain.log_post[static_cast<Eigen::Index>(stored)] = lp;
      ++stored;
    }
  } catch (const BudgetExhausted& e) {
    chain.partial = true;
    chain.warnings.push_back(std::string("run stopped early: ") + e.what());
  }

  chain.states.conservativeResize(static_cast<Eigen::Index>(stored), Eigen::NoChange);
  chain.log_post.conservativeResize(static_cast<Eigen::Index>(stored));
  chain.proposal_sd = scale;
  chain.acceptance_rate =
      chain.proposed ? static_cast<double>(chain.accepted) / static_cast<double>(chain.proposed) : 0.0;
  return chain;
}

std::vector<Chain> metropolis_hastings_chains(const LogDensity& log_post, const ParameterSpace& space,
                                              const MhOptions& opts, std::size_t n_chains, unsigned threads) {
  std::vector<Chain> chains(n_chains);
  parallel_for(n_chains, threads, [&](std::size_t c) {
    MhOptions o = opts;
    o.seed = derive_seed(opts.seed, stream::mcmc, c + 1);
    chains[c] = metropolis_hastings(log_post, space, o);
  });
  return chains;
}

LogDensity make_log_posterior(BlackBoxSimulator sim, ObservationSet obs, ParameterSpace space, ModelParams params,
                              std::size_t m, std::uint64_t seed) {
  if (!sim.stochastic()) {
    return [sim, obs, space, params](const Vector& x) {
      double lp = space.log_prior(x);
      if (!std::isfinite(lp)) return lp;
      return lp + log_likelihood(obs, apply_operator(obs.op, evaluate(sim, x, obs.control, 0)), params);
    };
  }
  auto calls = std::make_shared<std::uint64_t>(0);
  return [sim, obs, space, params, m, seed, calls](const Vector& x) {
    double lp = space.log_prior(x);
    if (!std::isfinite(lp)) return lp;
    auto est = log_likelihood_stochastic(sim, obs, x, m, derive_seed(seed, stream::likelihood, (*calls)++), params);
    return lp + est.value;
  };
}

}  // namespace calibr8
