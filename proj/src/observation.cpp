#include "calibr8/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "calibr8/error.hpp"
#include "calibr8/simd.hpp"

namespace calibr8 {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double bound(const ObservationModel& m, const ModelParams& params, const std::string& name, double fallback) {
  if (std::find(m.free_params.begin(), m.free_params.end(), name) == m.free_params.end()) return fallback;
  auto it = params.find(name);
  if (it == params.end()) throw ConfigurationError("free observation-model parameter '" + name + "' is unbound");
  return it->second;
}

Vector sigmas(const ObservationModel& m, std::size_t n, const ModelParams& params) {
  const auto nn = static_cast<Eigen::Index>(n);
  bool free_sigma = std::find(m.free_params.begin(), m.free_params.end(), "sigma") != m.free_params.end();
  if (free_sigma) {
    double s = bound(m, params, "sigma", 0.0);
    if (!(s > 0)) throw ConfigurationError("bound sigma must be > 0");
    return Vector::Constant(nn, s);
  }
  if (m.sigma.size() == 1) return Vector::Constant(nn, m.sigma[0]);
  if (m.sigma.size() != nn) throw ConfigurationError("sigma has " + std::to_string(m.sigma.size()) +
                                                     " entries for " + std::to_string(n) + " observations");
  return m.sigma;
}

double gaussian_chol_logpdf(const Eigen::LLT<Matrix>& llt, const Vector& r) {
  Vector z = llt.matrixL().solve(r);
  return -0.5 * z.squaredNorm() - llt.matrixLLT().diagonal().array().log().sum() -
         0.5 * static_cast<double>(r.size()) * kLog2Pi;
}

}  // namespace

ObservationOperator ObservationOperator::identity(std::size_t n) {
  ObservationOperator g;
  g.identity_ = true;
  g.identity_n_ = n;
  return g;
}

ObservationOperator::ObservationOperator(std::vector<OperatorComponent> components)
    : identity_(false), components_(std::move(components)) {}

void ObservationOperator::check(std::size_t m) const {
  if (identity_) {
    if (identity_n_ != 0 && identity_n_ != m)
      throw ConfigurationError("identity operator of size " + std::to_string(identity_n_) +
                               " applied to output of length " + std::to_string(m));
    return;
  }
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    const std::string where = "operator.components[" + std::to_string(i) + "]";
    switch (c.kind) {
      case OperatorComponent::Kind::index:
        if (c.index >= m)
          throw ConfigurationError("index " + std::to_string(c.index) + " out of range for output of length " +
                                       std::to_string(m),
                                   where);
        break;
      case OperatorComponent::Kind::mean:
      case OperatorComponent::Kind::sum:
        if (c.begin >= c.end || c.end > m) throw ConfigurationError("window out of range", where);
        break;
      case OperatorComponent::Kind::affine:
        if (static_cast<std::size_t>(c.weights.size()) != m)
          throw ConfigurationError("affine weights length does not match output length", where);
        break;
    }
  }
}

Vector apply_operator(const ObservationOperator& g, const Vector& f) {
  g.check(static_cast<std::size_t>(f.size()));
  if (g.is_identity()) return f;
  const auto& comps = g.components();
  Vector out(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto& c = comps[i];
    double v = 0.0;
    switch (c.kind) {
      case OperatorComponent::Kind::index: v = f[static_cast<Eigen::Index>(c.index)]; break;
      case OperatorComponent::Kind::sum:
      case OperatorComponent::Kind::mean: {
        auto b = static_cast<Eigen::Index>(c.begin), len = static_cast<Eigen::Index>(c.end - c.begin);
        v = f.segment(b, len).sum();
        if (c.kind == OperatorComponent::Kind::mean) v /= static_cast<double>(len);
        break;
      }
      case OperatorComponent::Kind::affine: v = c.weights.dot(f) + c.offset; break;
    }
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

Vector summarize(const SummaryStatistic& T, const Vector& v) {
  if (T.input_length != 0 && static_cast<std::size_t>(v.size()) != T.input_length)
    throw ConfigurationError("summary statistic expects length " + std::to_string(T.input_length) + ", got " +
                             std::to_string(v.size()));
  switch (T.kind) {
    case SummaryStatistic::Kind::identity: return v;
    case SummaryStatistic::Kind::mean: {
      if (v.size() == 0) throw ConfigurationError("mean of an empty vector");
      return Vector::Constant(1, v.mean());
    }
    case SummaryStatistic::Kind::variance: {
      if (v.size() == 0) throw ConfigurationError("variance of an empty vector");
      return Vector::Constant(1, (v.array() - v.mean()).square().mean());
    }
    case SummaryStatistic::Kind::quantiles: {
      if (v.size() == 0) throw ConfigurationError("quantiles of an empty vector");
      std::vector<double> s(v.data(), v.data() + v.size());
      std::sort(s.begin(), s.end());
      Vector out(static_cast<Eigen::Index>(T.levels.size()));
      for (std::size_t i = 0; i < T.levels.size(); ++i) {
        double h = T.levels[i] * static_cast<double>(s.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(h));
        std::size_t hi = std::min(lo + 1, s.size() - 1);
        out[static_cast<Eigen::Index>(i)] = s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
      }
      return out;
    }
    case SummaryStatistic::Kind::affine:
      if (T.A.cols() != v.size()) throw ConfigurationError("affine summary has the wrong input width");
      return T.A * v + (T.b.size() ? T.b : Vector::Zero(T.A.rows()));
  }
  return v;
}

ObservationModel ObservationModel::perfect() {
  ObservationModel m;
  m.kind = Kind::perfect_match;
  return m;
}

ObservationModel ObservationModel::gaussian(Vector sigma) {
  ObservationModel m;
  m.kind = Kind::gaussian_iid;
  m.sigma = std::move(sigma);
  return m;
}

ObservationModel ObservationModel::correlated(Matrix covariance) {
  ObservationModel m;
  m.kind = Kind::gaussian_correlated;
  m.covariance = std::move(covariance);
  m.validate(static_cast<std::size_t>(m.covariance.rows()));
  return m;
}

ObservationModel ObservationModel::student(Vector sigma, double nu) {
  ObservationModel m;
  m.kind = Kind::student_t;
  m.sigma = std::move(sigma);
  m.nu = nu;
  return m;
}

void ObservationModel::validate(std::size_t n) {
  auto has_free = [&](const char* name) {
    return std::find(free_params.begin(), free_params.end(), name) != free_params.end();
  };
  for (const auto& p : free_params)
    if (p != "sigma" && p != "nu") throw ConfigurationError("unknown free parameter '" + p + "'", "model.free_params");
  if (kind == Kind::gaussian_iid || kind == Kind::student_t) {
    if (!has_free("sigma")) {
      if (sigma.size() != 1 && static_cast<std::size_t>(sigma.size()) != n)
        throw ConfigurationError("sigma must have 1 or n entries", "model.sigma");
      if ((sigma.array() <= 0).any() || !sigma.allFinite())
        throw ConfigurationError("sigma must be > 0", "model.sigma");
    }
  }
  if (kind == Kind::student_t && !has_free("nu") && !(nu > 2))
    throw ConfigurationError("student-t requires nu > 2", "model.nu");
  if (kind == Kind::gaussian_correlated) {
    if (static_cast<std::size_t>(covariance.rows()) != n || covariance.cols() != covariance.rows())
      throw ConfigurationError("covariance must be n x n", "model.covariance");
    if (!covariance.isApprox(covariance.transpose(), 1e-12))
      throw NumericError("observation covariance is not symmetric");
    auto llt = std::make_shared<Eigen::LLT<Matrix>>(covariance);
    if (llt->info() != Eigen::Success) throw NumericError("observation covariance is not positive definite");
    chol = std::move(llt);
  }
}

std::string to_string(ObservationModel::Kind k) {
  switch (k) {
    case ObservationModel::Kind::perfect_match: return "perfect-match";
    case ObservationModel::Kind::gaussian_iid: return "gaussian-iid";
    case ObservationModel::Kind::gaussian_correlated: return "gaussian-correlated";
    case ObservationModel::Kind::student_t: return "student-t";
  }
  return "gaussian-iid";
}

ObservationModel::Kind model_kind_from_string(const std::string& s) {
  if (s == "perfect-match") return ObservationModel::Kind::perfect_match;
  if (s == "gaussian-iid") return ObservationModel::Kind::gaussian_iid;
  if (s == "gaussian-correlated") return ObservationModel::Kind::gaussian_correlated;
  if (s == "student-t") return ObservationModel::Kind::student_t;
  throw ConfigurationError("unknown observation model '" + s + "'", "model.kind");
}

void ObservationSet::validate() {
  const std::size_t n = size();
  if (n == 0) throw ConfigurationError("observation vector is empty", "y");
  if (!op.is_identity() && op.size() != n)
    throw ConfigurationError("operator has " + std::to_string(op.size()) + " components for " + std::to_string(n) +
                                 " observations",
                             "operator");
  if (op.is_identity() && op.size() != 0 && op.size() != n)
    throw ConfigurationError("identity operator size does not match y", "operator");
  if (locations && static_cast<std::size_t>(locations->rows()) != n)
    throw ConfigurationError("locations row count must equal the observation count", "locations");
  model.validate(n);
}

std::vector<std::string> model_warnings(const ObservationSet& obs) {
  std::vector<std::string> w;
  if (obs.model.kind == ObservationModel::Kind::perfect_match) {
    bool all_integral = true;
    for (Eigen::Index i = 0; i < obs.y.size(); ++i) all_integral &= obs.y[i] == std::round(obs.y[i]);
    if (!all_integral) w.push_back("perfect-match observation model on continuous data is unlikely to hold");
  }
  return w;
}

Vector observation_variance(const ObservationSet& obs, const ModelParams& params) {
  const std::size_t n = obs.size();
  const auto& m = obs.model;
  switch (m.kind) {
    case ObservationModel::Kind::perfect_match: return Vector::Zero(static_cast<Eigen::Index>(n));
    case ObservationModel::Kind::gaussian_iid: return sigmas(m, n, params).array().square();
    case ObservationModel::Kind::gaussian_correlated: return m.covariance.diagonal();
    case ObservationModel::Kind::student_t: {
      double nu = bound(m, params, "nu", m.nu);
      return sigmas(m, n, params).array().square() * (nu / (nu - 2.0));
    }
  }
  return Vector::Zero(static_cast<Eigen::Index>(n));
}

Vector sample_noise(const ObservationSet& obs, Rng& rng, const ModelParams& params) {
  const std::size_t n = obs.size();
  const auto nn = static_cast<Eigen::Index>(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(nn);
  const auto& m = obs.model;
  switch (m.kind) {
    case ObservationModel::Kind::perfect_match: return Vector::Zero(nn);
    case ObservationModel::Kind::gaussian_iid: {
      Vector s = sigmas(m, n, params);
      for (Eigen::Index i = 0; i < nn; ++i) z[i] = s[i] * normal(rng);
      return z;
    }
    case ObservationModel::Kind::gaussian_correlated: {
      for (Eigen::Index i = 0; i < nn; ++i) z[i] = normal(rng);
      Eigen::LLT<Matrix> local;
      const Eigen::LLT<Matrix>* llt = m.chol.get();
      if (!llt) {
        local.compute(m.covariance);
        llt = &local;
      }
      return llt->matrixL() * z;
    }
    case ObservationModel::Kind::student_t: {
      Vector s = sigmas(m, n, params);
      std::student_t_distribution<double> t(bound(m, params, "nu", m.nu));
      for (Eigen::Index i = 0; i < nn; ++i) z[i] = s[i] * t(rng);
      return z;
    }
  }
  return Vector::Zero(nn);
}

double log_likelihood(const ObservationSet& obs, const Vector& pred, const ModelParams& params) {
  const std::size_t n = obs.size();
  if (static_cast<std::size_t>(pred.size()) != n)
    throw ConfigurationError("prediction has " + std::to_string(pred.size()) + " entries for " + std::to_string(n) +
                             " observations");
  const auto& m = obs.model;
  switch (m.kind) {
    case ObservationModel::Kind::perfect_match: return obs.y == pred ? 0.0 : kNegInf;
    case ObservationModel::Kind::gaussian_iid: {
      Vector s = sigmas(m, n, params);
      Vector inv_var = s.array().square().inverse();
      double q = simd::weighted_sq_sum({obs.y.data(), n}, {pred.data(), n}, {inv_var.data(), n});
      return -0.5 * q - s.array().log().sum() - 0.5 * static_cast<double>(n) * kLog2Pi;
    }
    case ObservationModel::Kind::gaussian_correlated: {
      Eigen::LLT<Matrix> local;
      const Eigen::LLT<Matrix>* llt = m.chol.get();
      if (!llt) {
        local.compute(m.covariance);
        if (local.info() != Eigen::Success) throw NumericError("observation covariance is not positive definite");
        llt = &local;
      }
      return gaussian_chol_logpdf(*llt, obs.y - pred);
    }
    case ObservationModel::Kind::student_t: {
      Vector s = sigmas(m, n, params);
      double nu = bound(m, params, "nu", m.nu);
      double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
      double ll = 0.0;
      for (Eigen::Index i = 0; i < obs.y.size(); ++i) {
        double z = (obs.y[i] - pred[i]) / s[i];
        ll += c - std::log(s[i]) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
      }
      return ll;
    }
  }
  return kNegInf;
}

LogLikEstimate log_likelihood_stochastic(const BlackBoxSimulator& sim, const ObservationSet& obs, const Vector& x,
                                         std::size_t m, std::uint64_t seed, const ModelParams& params) {
  if (m < 1) throw ParameterError("log_likelihood_stochastic needs m >= 1");
  std::vector<double> lls(m);
  for (std::size_t j = 0; j < m; ++j) {
    Vector f = evaluate(sim, x, obs.control, derive_seed(seed, stream::likelihood, j));
    lls[j] = log_likelihood(obs, apply_operator(obs.op, f), params);
  }
  LogLikEstimate est;
  double lse = simd::log_sum_exp(lls);
  if (lse == kNegInf) {
    est.value = kNegInf;
    est.degenerate = true;
    return est;
  }
  est.value = lse - std::log(static_cast<double>(m));
  return est;
}

double discrepancy_log_likelihood(const ObservationSet& obs, const Vector& pred, const GPModel& disc,
                                  const ModelParams& params) {
  if (!obs.locations) throw ConfigurationError("discrepancy likelihood needs observation locations", "locations");
  Matrix cov = disc.prior_covariance(*obs.locations);
  Vector mean = pred + disc.prior_mean(*obs.locations);
  switch (obs.model.kind) {
    case ObservationModel::Kind::gaussian_iid:
      cov.diagonal() += observation_variance(obs, params);
      break;
    case ObservationModel::Kind::gaussian_correlated: cov += obs.model.covariance; break;
    default: throw ConfigurationError("discrepancy likelihood requires a gaussian error model", "model.kind");
  }
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("discrepancy covariance is not positive definite");
  return gaussian_chol_logpdf(llt, obs.y - mean);
}

}  // namespace calibr8
