#include <cmath>
#include <limits>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/optim.hpp"

namespace calibr8 {

MleResult mle(const ScoreFunction& score, const ParameterSpace& space, std::size_t budget, int restarts,
              std::uint64_t seed) {
  const std::size_t d = space.dim();
  if (budget < 10 * d) throw ParameterError("mle budget must be at least 10 d");
  if (restarts < 1) throw ParameterError("mle needs at least one restart");

  const std::uint64_t score_seed = derive_seed(seed, stream::mle, 0);
  std::uint64_t used = 0;
  auto objective = [&](const Vector& x) {
    ++used;
    try {
      double s = score(x, score_seed);
      return std::isnan(s) ? std::numeric_limits<double>::infinity() : s;
    } catch (const EvaluationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Matrix starts(restarts, static_cast<Eigen::Index>(d));
  starts.row(0) = space.prior_mean().transpose();
  if (restarts > 1) {
    starts.bottomRows(restarts - 1) =
        build_design(space, static_cast<std::size_t>(restarts - 1), DesignMethod::latin_hypercube,
                     derive_seed(seed, stream::mle, 1));
  }
  const Vector lo = space.lower(), hi = space.upper();
  const Vector step = 0.1 * (hi - lo);

  MleResult best;
  best.score = std::numeric_limits<double>::infinity();
  best.best_restart = -1;
  std::size_t remaining = budget;
  for (int r = 0; r < restarts; ++r) {
    std::size_t share = remaining / static_cast<std::size_t>(restarts - r);
    if (share == 0) break;
    auto res = optim::nelder_mead(objective, starts.row(r).transpose(), step, lo, hi, static_cast<int>(share));
    remaining -= std::min<std::size_t>(remaining, static_cast<std::size_t>(res.evaluations));
    if (res.value < best.score) {
      best.score = res.value;
      best.x = res.x;
      best.best_restart = r;
    }
  }
  best.evaluations = used;
  if (best.best_restart < 0) throw CalibrationError("mle: every start failed to evaluate");
  return best;
}

}  // namespace calibr8
