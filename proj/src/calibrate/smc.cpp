#include <algorithm>
#include <cmath>
#include <limits>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {

std::string to_string(SmcSchedule s) { return s == SmcSchedule::tempering ? "tempering" : "abc-tolerance"; }

SmcSchedule smc_schedule_from_string(const std::string& s) {
  if (s == "tempering") return SmcSchedule::tempering;
  if (s == "abc-tolerance") return SmcSchedule::abc_tolerance;
  throw ConfigurationError("unknown smc schedule '" + s + "'", "schedule");
}

namespace {

constexpr double kMinEss = 5.0;

void check_options(const SmcOptions& o) {
  if (o.n_particles < 50) throw ParameterError("smc needs n_particles >= 50");
  if (!(o.target_ess_fraction > 0 && o.target_ess_fraction < 1))
    throw ParameterError("smc target_ess_fraction must lie in (0, 1)");
  if (o.mh_moves < 1) throw ParameterError("smc needs at least one MH move per stage");
}

/// Cholesky factor of (2.38^2 / d) times the weighted particle covariance,
/// regularized so every coordinate keeps some spread.
Matrix proposal_factor(const Matrix& pts, const Vector& w, const ParameterSpace& space) {
  const auto d = pts.cols();
  Vector mu = pts.transpose() * w;
  Matrix c = pts.rowwise() - mu.transpose();
  Matrix cov = c.transpose() * w.asDiagonal() * c;
  Vector range = space.upper() - space.lower();
  for (Eigen::Index k = 0; k < d; ++k) cov(k, k) += 1e-10 * range[k] * range[k];
  cov *= 2.38 * 2.38 / static_cast<double>(d);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    Matrix diag = Matrix(cov.diagonal().asDiagonal());
    return diag.cwiseSqrt();
  }
  return llt.matrixL();
}

Matrix gather(const Matrix& pts, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), pts.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

template <class V>
V gather_vec(const V& v, const std::vector<std::size_t>& idx) {
  V out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
  return out;
}

double checked(double v, const char* what) {
  if (std::isnan(v)) throw CalibrationError(std::string("smc: ") + what + " returned NaN");
  return v;
}

}  // namespace

ParticleSet smc_tempering(const LogDensity& log_lik, const ParameterSpace& space, const SmcOptions& opts) {
  check_options(opts);
  if (!opts.adaptive) {
    if (opts.values.empty() || opts.values.back() != 1.0) throw ParameterError("smc tempering schedule must end at 1");
    for (std::size_t j = 0; j < opts.values.size(); ++j)
      if (!(opts.values[j] > (j ? opts.values[j - 1] : 0.0)) || opts.values[j] > 1.0)
        throw ParameterError("smc temperatures must increase within (0, 1]");
  }
  const std::size_t n = opts.n_particles, d = space.dim();
  const auto N = static_cast<Eigen::Index>(n);

  Matrix pts(N, static_cast<Eigen::Index>(d));
  Vector ll(N);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(opts.seed, stream::smc, 0), stream::smc, i);
    Vector x = space.sample_prior(rng);
    pts.row(static_cast<Eigen::Index>(i)) = x.transpose();
    ll[static_cast<Eigen::Index>(i)] = checked(log_lik(x), "log likelihood");
  });

  ParticleSet out;
  out.meta.method = "smc";
  double beta = 0.0;
  for (std::size_t stage = 1;; ++stage) {
    double next;
    auto inc_ess = [&](double b) {
      Vector lw = (b - beta) * ll;
      for (Eigen::Index i = 0; i < N; ++i)
        if (std::isnan(lw[i])) lw[i] = -std::numeric_limits<double>::infinity();
      return effective_sample_size(normalize_log_weights(lw));
    };
    const double target = opts.target_ess_fraction * static_cast<double>(n);
    if (opts.adaptive) {
      if (stage > opts.max_stages || inc_ess(1.0) >= target) {
        next = 1.0;
      } else {
        double lo = beta, hi = 1.0;
        for (int it = 0; it < 60; ++it) {
          double mid = 0.5 * (lo + hi);
          (inc_ess(mid) >= target ? lo : hi) = mid;
        }
        next = std::max(lo, beta + 1e-12);
      }
    } else {
      next = opts.values[std::min(stage - 1, opts.values.size() - 1)];
    }

    Vector lw = (next - beta) * ll;
    for (Eigen::Index i = 0; i < N; ++i)
      if (std::isnan(lw[i])) lw[i] = -std::numeric_limits<double>::infinity();
    Vector w = normalize_log_weights(lw);
    double ess = effective_sample_size(w);
    if (ess < kMinEss)
      throw DegeneracyError("smc: effective sample size " + std::to_string(ess) + " at temperature " +
                            std::to_string(next) + "; add particles or stages");
    beta = next;
    out.meta.schedule.push_back(beta);

    if (beta >= 1.0) {
      out.points = std::move(pts);
      out.weights = std::move(w);
      out.log_post.resize(N);
      for (Eigen::Index i = 0; i < N; ++i) out.log_post[i] = space.log_prior(out.points.row(i).transpose()) + ll[i];
      return out;
    }

    Rng rs = make_rng(derive_seed(opts.seed, stream::smc, stage), stream::smc, n);
    Matrix L = proposal_factor(pts, w, space);
    auto idx = systematic_resample(w, n, rs);
    pts = gather(pts, idx);
    ll = gather_vec(ll, idx);

    std::vector<int> acc(n, 0);
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Rng rng = make_rng(derive_seed(opts.seed, stream::smc, stage), stream::smc, i);
      std::normal_distribution<double> normal;
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const auto r = static_cast<Eigen::Index>(i);
      Vector x = pts.row(r).transpose();
      double lpr = space.log_prior(x), lli = ll[r];
      for (int m = 0; m < opts.mh_moves; ++m) {
        Vector z(static_cast<Eigen::Index>(d));
        for (auto& v : z) v = normal(rng);
        Vector prop = x + L * z;
        double u = unif(rng);
        if (!space.contains(prop)) continue;
        double lpr_new = space.log_prior(prop);
        double ll_new = checked(log_lik(prop), "log likelihood");
        if (std::log(u) < (lpr_new + beta * ll_new) - (lpr + beta * lli)) {
          x = prop;
          lpr = lpr_new;
          lli = ll_new;
          ++acc[i];
        }
      }
      pts.row(r) = x.transpose();
      ll[r] = lli;
    });
    for (int a : acc) out.meta.accepted += static_cast<std::uint64_t>(a);
    out.meta.proposed += n * static_cast<std::uint64_t>(opts.mh_moves);
  }
}

ParticleSet smc_abc(const ScoreFunction& distance, const ParameterSpace& space, const SmcOptions& opts) {
  check_options(opts);
  if (!opts.adaptive) {
    if (opts.values.empty()) throw ParameterError("smc abc-tolerance schedule is empty");
    for (std::size_t j = 1; j < opts.values.size(); ++j)
      if (!(opts.values[j] < opts.values[j - 1])) throw ParameterError("smc tolerances must decrease");
  }
  const std::size_t n = opts.n_particles, d = space.dim();
  const auto N = static_cast<Eigen::Index>(n);
  auto score_seed = [&](std::size_t stage, std::size_t i, int move) {
    return derive_seed(derive_seed(opts.seed, stream::smc_sim, stage), static_cast<std::uint64_t>(move), i);
  };

  Matrix pts(N, static_cast<Eigen::Index>(d));
  Vector sc(N);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(opts.seed, stream::smc, 0), stream::smc, i);
    Vector x = space.sample_prior(rng);
    pts.row(static_cast<Eigen::Index>(i)) = x.transpose();
    double s = distance(x, score_seed(0, i, 0));
    sc[static_cast<Eigen::Index>(i)] = std::isnan(s) ? std::numeric_limits<double>::infinity() : s;
  });

  ParticleSet out;
  out.meta.method = "smc";
  double tau = std::numeric_limits<double>::infinity();
  for (std::size_t stage = 1;; ++stage) {
    double next;
    bool last;
    if (opts.adaptive) {
      std::vector<double> s(sc.data(), sc.data() + n);
      next = std::max(quantile_threshold(opts.target_ess_fraction, s), opts.final_tolerance);
      if (!(next < tau)) next = opts.final_tolerance;
      last = next <= opts.final_tolerance || stage >= opts.max_stages;
      if (stage >= opts.max_stages && next > opts.final_tolerance)
        out.meta.warnings.push_back("smc stopped at max_stages before reaching final_tolerance");
    } else {
      next = opts.values[stage - 1];
      last = stage == opts.values.size();
    }

    Vector w(N);
    for (Eigen::Index i = 0; i < N; ++i) w[i] = sc[i] < next ? 1.0 : 0.0;
    double alive = w.sum();
    if (alive < kMinEss)
      throw DegeneracyError("smc: only " + std::to_string(static_cast<long>(alive)) + " particles below tolerance " +
                            std::to_string(next) + "; use a slower schedule or more particles");
    w /= alive;
    tau = next;
    out.meta.schedule.push_back(tau);

    if (last) {
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < n; ++i)
        if (w[static_cast<Eigen::Index>(i)] > 0) keep.push_back(i);
      out.points = gather(pts, keep);
      out.weights = Vector::Constant(static_cast<Eigen::Index>(keep.size()), 1.0 / static_cast<double>(keep.size()));
      out.log_post = -gather_vec(sc, keep);
      return out;
    }

    Rng rs = make_rng(derive_seed(opts.seed, stream::smc, stage), stream::smc, n);
    Matrix L = proposal_factor(pts, w, space);
    auto idx = systematic_resample(w, n, rs);
    pts = gather(pts, idx);
    sc = gather_vec(sc, idx);

    std::vector<int> acc(n, 0);
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Rng rng = make_rng(derive_seed(opts.seed, stream::smc, stage), stream::smc, i);
      std::normal_distribution<double> normal;
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const auto r = static_cast<Eigen::Index>(i);
      Vector x = pts.row(r).transpose();
      double lpr = space.log_prior(x), s = sc[r];
      for (int m = 0; m < opts.mh_moves; ++m) {
        Vector z(static_cast<Eigen::Index>(d));
        for (auto& v : z) v = normal(rng);
        Vector prop = x + L * z;
        double u = unif(rng);
        if (!space.contains(prop)) continue;
        double lpr_new = space.log_prior(prop);
        if (!(std::log(u) < lpr_new - lpr)) continue;
        double s_new = distance(prop, score_seed(stage, i, m + 1));
        if (s_new < tau) {
          x = prop;
          lpr = lpr_new;
          s = s_new;
          ++acc[i];
        }
      }
      pts.row(r) = x.transpose();
      sc[r] = s;
    });
    for (int a : acc) out.meta.accepted += static_cast<std::uint64_t>(a);
    out.meta.proposed += n * static_cast<std::uint64_t>(opts.mh_moves);
  }
}

}  // namespace calibr8
