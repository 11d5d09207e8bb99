#include "calibr8/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "calibr8/error.hpp"
#include "calibr8/optim.hpp"
#include "calibr8/random.hpp"
#include "calibr8/simd.hpp"

namespace calibr8 {
namespace {

constexpr double kSqrt5 = 2.23606797749978969641;
constexpr double kMaxJitter = 1e-4;

// log-space hyperparameter box on the standardized scale
constexpr double kLogLsLo = -4.6051701859880914;   // log 1e-2
constexpr double kLogLsHi = 4.6051701859880914;    // log 1e2
constexpr double kLogSvLo = -13.815510557964274;   // log 1e-6
constexpr double kLogSvHi = 4.6051701859880914;    // log 1e2
constexpr double kLogNoiseLo = -23.025850929940457;  // log 1e-10
constexpr double kLogNoiseHi = 2.3025850929940459;   // log 10

}  // namespace

std::string to_string(KernelKind k) { return k == KernelKind::matern52 ? "matern-5/2" : "squared-exponential"; }

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "squared-exponential") return KernelKind::squared_exponential;
  if (s == "matern-5/2") return KernelKind::matern52;
  throw ConfigurationError("unknown kernel kind '" + s + "'");
}

std::string to_string(MeanFunction::Kind k) {
  switch (k) {
    case MeanFunction::Kind::zero: return "zero";
    case MeanFunction::Kind::constant: return "constant";
    case MeanFunction::Kind::linear: return "linear";
  }
  return "zero";
}

MeanFunction::Kind mean_kind_from_string(const std::string& s) {
  if (s == "zero") return MeanFunction::Kind::zero;
  if (s == "constant") return MeanFunction::Kind::constant;
  if (s == "linear") return MeanFunction::Kind::linear;
  throw ConfigurationError("unknown mean kind '" + s + "'");
}

double Kernel::correlation(double r2) const {
  if (kind == KernelKind::squared_exponential) return std::exp(-0.5 * r2);
  double r = std::sqrt(r2);
  return (1.0 + kSqrt5 * r + 5.0 / 3.0 * r2) * std::exp(-kSqrt5 * r);
}

double Kernel::operator()(const Vector& a, const Vector& b) const {
  double r2 = ((a - b).cwiseQuotient(lengthscales)).squaredNorm();
  return signal_variance * correlation(r2);
}

Vector Kernel::row(const Matrix& X, const Vector& q) const {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto d = static_cast<std::size_t>(X.cols());
  std::vector<const double*> cols(d);
  for (std::size_t k = 0; k < d; ++k) cols[k] = X.col(static_cast<Eigen::Index>(k)).data();
  Vector inv_ls = lengthscales.cwiseInverse();
  Vector out(X.rows());
  simd::scaled_sq_dist(cols.data(), q.data(), inv_ls.data(), n, d, out.data());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = signal_variance * correlation(out[i]);
  return out;
}

Matrix Kernel::cross(const Matrix& A, const Matrix& B) const {
  Matrix K(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) K.col(j) = row(A, B.row(j).transpose());
  return K;
}

Matrix Kernel::gram(const Matrix& X) const {
  Matrix K = cross(X, X);
  K.diagonal().array() += signal_variance * jitter;
  return K;
}

double MeanFunction::operator()(const Vector& x) const {
  switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::constant: return intercept;
    case Kind::linear: return intercept + slope.dot(x);
  }
  return 0.0;
}

Vector MeanFunction::at(const Matrix& X) const {
  switch (kind) {
    case Kind::zero: return Vector::Zero(X.rows());
    case Kind::constant: return Vector::Constant(X.rows(), intercept);
    case Kind::linear: return (X * slope).array() + intercept;
  }
  return Vector::Zero(X.rows());
}

GPModel::Transform GPModel::Transform::identity(std::size_t d) {
  Transform t;
  t.x_offset = Vector::Zero(static_cast<Eigen::Index>(d));
  t.x_scale = Vector::Ones(static_cast<Eigen::Index>(d));
  return t;
}

GPModel::GPModel(Kernel kernel, MeanFunction mean, double noise_variance, Transform transform)
    : kernel_(std::move(kernel)), mean_(std::move(mean)), noise_(noise_variance), tf_(std::move(transform)) {
  if (kernel_.lengthscales.size() != tf_.x_offset.size())
    throw ParameterError("kernel lengthscale count does not match the input dimension");
  if ((kernel_.lengthscales.array() <= 0).any()) throw ParameterError("lengthscales must be positive");
  if (kernel_.signal_variance < 0 || kernel_.jitter < 0 || noise_ < 0)
    throw ParameterError("variances must be nonnegative");
  X_.resize(0, kernel_.lengthscales.size());
  Xu_ = X_;
}

void GPModel::add_nugget(const Matrix& Xu, const Vector& q, Vector& k) const {
  const double nug = kernel_.signal_variance * jitter_used_;
  if (nug == 0.0) return;
  for (Eigen::Index i = 0; i < Xu.rows(); ++i)
    if ((Xu.row(i).transpose().array() == q.array()).all()) k[i] += nug;
}

Vector GPModel::to_unit(const Vector& x) const { return (x - tf_.x_offset).cwiseQuotient(tf_.x_scale); }

Matrix GPModel::to_unit(const Matrix& X) const {
  Matrix U = X;
  for (Eigen::Index k = 0; k < X.cols(); ++k) U.col(k) = (X.col(k).array() - tf_.x_offset[k]) / tf_.x_scale[k];
  return U;
}

GPModel GPModel::conditioned(const Matrix& X, const Vector& Y) const {
  if (X.rows() != Y.size()) throw ParameterError("GP training inputs and outputs differ in length");
  if (X.cols() != tf_.x_offset.size()) throw ParameterError("GP training inputs have the wrong dimension");
  GPModel gp = *this;
  gp.X_ = X;
  gp.Y_ = Y;
  gp.Xu_ = to_unit(X);
  Vector ys = (Y.array() - tf_.y_offset) / tf_.y_scale;
  gp.resid_ = ys - mean_.at(gp.Xu_);

  Matrix Ksig = kernel_.cross(gp.Xu_, gp.Xu_);
  const auto n = static_cast<double>(X.rows());
  double jit = kernel_.jitter > 0 ? kernel_.jitter : 1e-12;
  for (;;) {
    Matrix K = Ksig;
    K.diagonal().array() += noise_ + kernel_.signal_variance * jit;
    gp.chol_.compute(K);
    if (gp.chol_.info() == Eigen::Success && gp.chol_.matrixLLT().diagonal().minCoeff() > 0) {
      gp.jitter_used_ = jit;
      break;
    }
    jit *= 10.0;
    if (jit > kMaxJitter * (1.0 + 1e-9))
      throw ConditioningError("GP covariance not positive definite after jitter escalation to 1e-4");
  }
  gp.alpha_ = gp.chol_.solve(gp.resid_);
  gp.lml_ = -0.5 * gp.resid_.dot(gp.alpha_) - gp.chol_.matrixLLT().diagonal().array().log().sum() -
            0.5 * n * std::log(2.0 * std::numbers::pi);
  return gp;
}

GpPrediction GPModel::predict(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) throw ParameterError("GP query has the wrong dimension");
  Vector xu = to_unit(x);
  double mu = mean_(xu);
  double var = kernel_.signal_variance * (1.0 + jitter_used_);
  if (X_.rows() > 0) {
    Vector ks = kernel_.row(Xu_, xu);
    add_nugget(Xu_, xu, ks);
    mu += ks.dot(alpha_);
    Vector v = chol_.matrixL().solve(ks);
    var -= v.squaredNorm();
  }
  GpPrediction p;
  p.clamped = var < -1e-10;
  if (var < 0) var = 0;
  p.mean = tf_.y_offset + tf_.y_scale * mu;
  p.variance = tf_.y_scale * tf_.y_scale * var;
  return p;
}

void GPModel::predict_joint(const Matrix& Xs, Vector& mean, Matrix& cov) const {
  Matrix Xsu = to_unit(Xs);
  mean = mean_.at(Xsu);
  cov = kernel_.cross(Xsu, Xsu);
  cov.diagonal().array() += kernel_.signal_variance * jitter_used_;
  if (X_.rows() > 0) {
    Matrix Ks = kernel_.cross(Xu_, Xsu);
    for (Eigen::Index j = 0; j < Xsu.rows(); ++j) {
      Vector col = Ks.col(j);
      add_nugget(Xu_, Xsu.row(j).transpose(), col);
      Ks.col(j) = col;
    }
    mean += Ks.transpose() * alpha_;
    Matrix V = chol_.matrixL().solve(Ks);
    cov -= V.transpose() * V;
  }
  mean = (mean.array() * tf_.y_scale + tf_.y_offset).matrix();
  cov *= tf_.y_scale * tf_.y_scale;
  cov = 0.5 * (cov + cov.transpose());
}

Vector GPModel::prior_mean(const Matrix& W) const {
  return (mean_.at(to_unit(W)).array() * tf_.y_scale + tf_.y_offset).matrix();
}

Matrix GPModel::prior_covariance(const Matrix& W) const {
  return kernel_.gram(to_unit(W)) * (tf_.y_scale * tf_.y_scale);
}

MarginalLikelihood log_marginal_likelihood(const Matrix& Xu, const Vector& r, KernelKind kind,
                                           const Vector& log_params, bool estimate_noise, double fixed_noise,
                                           double jitter) {
  const Eigen::Index n = Xu.rows(), d = Xu.cols();
  Vector ls = log_params.head(d).array().exp();
  double sv = std::exp(log_params[d]);
  double noise = estimate_noise ? std::exp(log_params[d + 1]) : fixed_noise;

  std::vector<Matrix> D(static_cast<std::size_t>(d), Matrix(n, n));
  Matrix r2 = Matrix::Zero(n, n);
  for (Eigen::Index k = 0; k < d; ++k) {
    auto& Dk = D[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        double t = (Xu(i, k) - Xu(j, k)) / ls[k];
        Dk(i, j) = t * t;
      }
    r2 += Dk;
  }
  Kernel kern{kind, ls, sv, jitter};
  Matrix Ksig(n, n), dKdr(n, n);  // dKdr: factor multiplying D_k in dK/dlog l_k
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      double q = r2(i, j);
      Ksig(i, j) = sv * kern.correlation(q);
      if (kind == KernelKind::squared_exponential) {
        dKdr(i, j) = Ksig(i, j);
      } else {
        double rr = std::sqrt(q);
        dKdr(i, j) = sv * (5.0 / 3.0) * (1.0 + kSqrt5 * rr) * std::exp(-kSqrt5 * rr);
      }
    }
  Matrix K = Ksig;
  K.diagonal().array() += noise + sv * jitter;

  MarginalLikelihood out;
  out.gradient = Vector::Zero(log_params.size());
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) {
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }
  Vector alpha = llt.solve(r);
  out.value = -0.5 * r.dot(alpha) - llt.matrixLLT().diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  Matrix W = alpha * alpha.transpose() - llt.solve(Matrix::Identity(n, n));
  for (Eigen::Index k = 0; k < d; ++k)
    out.gradient[k] = 0.5 * (W.array() * dKdr.array() * D[static_cast<std::size_t>(k)].array()).sum();
  out.gradient[d] = 0.5 * ((W.array() * Ksig.array()).sum() + sv * jitter * W.trace());
  if (estimate_noise) out.gradient[d + 1] = 0.5 * noise * W.trace();
  return out;
}

GPModel gp_fit(const Matrix& X, const Vector& Y, const GpFitOptions& opts) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) throw ParameterError("gp_fit needs at least 2 training points");
  if (Y.size() != n) throw ParameterError("gp_fit: X and Y differ in length");
  if (!X.allFinite() || !Y.allFinite()) throw ParameterError("gp_fit: non-finite training data");

  GPModel::Transform tf;
  tf.x_offset = X.colwise().minCoeff().transpose();
  tf.x_scale = (X.colwise().maxCoeff() - X.colwise().minCoeff()).transpose();
  for (Eigen::Index k = 0; k < d; ++k)
    if (!(tf.x_scale[k] > 0)) tf.x_scale[k] = 1.0;
  tf.y_offset = Y.mean();
  double sd = std::sqrt((Y.array() - tf.y_offset).square().mean());
  tf.y_scale = sd > 1e-12 * std::max(1.0, std::abs(tf.y_offset)) ? sd : 1.0;

  Matrix Xu = X;
  for (Eigen::Index k = 0; k < d; ++k) Xu.col(k) = (X.col(k).array() - tf.x_offset[k]) / tf.x_scale[k];
  Vector ys = (Y.array() - tf.y_offset) / tf.y_scale;

  MeanFunction mean;
  mean.kind = opts.mean;
  if (opts.mean == MeanFunction::Kind::constant) {
    mean.intercept = ys.mean();
  } else if (opts.mean == MeanFunction::Kind::linear) {
    if (n < d + 1) throw ParameterError("linear mean needs at least d + 1 training points");
    Matrix H(n, d + 1);
    H.col(0).setOnes();
    H.rightCols(d) = Xu;
    Vector beta = H.colPivHouseholderQr().solve(ys);
    mean.intercept = beta[0];
    mean.slope = beta.tail(d);
  }
  Vector r = ys - mean.at(Xu);

  const bool est_noise = !opts.fixed_noise.has_value();
  const double fixed_noise = est_noise ? 0.0 : *opts.fixed_noise / (tf.y_scale * tf.y_scale);
  const Eigen::Index p = d + 1 + (est_noise ? 1 : 0);
  Vector lo(p), hi(p);
  lo.head(d).setConstant(kLogLsLo);
  hi.head(d).setConstant(kLogLsHi);
  lo[d] = kLogSvLo;
  hi[d] = kLogSvHi;
  if (est_noise) {
    lo[d + 1] = kLogNoiseLo;
    hi[d + 1] = kLogNoiseHi;
  }

  auto objective = [&](const Vector& theta, Vector* grad) {
    auto ml = log_marginal_likelihood(Xu, r, opts.kernel, theta, est_noise, fixed_noise);
    if (grad) *grad = -ml.gradient;
    return -ml.value;
  };

  Vector best_theta;
  double best_val = std::numeric_limits<double>::infinity();
  const int restarts = std::max(1, opts.restarts);
  for (int s = 0; s < restarts; ++s) {
    Vector theta0(p);
    if (s == 0) {
      theta0.head(d).setConstant(std::log(0.5));
      theta0[d] = 0.0;
      if (est_noise) theta0[d + 1] = std::log(1e-2);
    } else {
      Rng rng = make_rng(opts.seed, stream::gp_fit, static_cast<std::uint64_t>(s));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index k = 0; k < d; ++k) theta0[k] = std::log(0.05) + u(rng) * std::log(100.0);
      theta0[d] = std::log(0.1) + u(rng) * std::log(100.0);
      if (est_noise) theta0[d + 1] = std::log(1e-6) + u(rng) * std::log(1e5);
    }
    auto res = optim::bfgs_box(objective, theta0, lo, hi, opts.max_iter);
    if (std::isfinite(res.value) && res.value < best_val) {
      best_val = res.value;
      best_theta = res.x;
    }
  }
  if (best_theta.size() == 0) throw ConditioningError("gp_fit: marginal likelihood not finite at any restart");

  Kernel kernel{opts.kernel, best_theta.head(d).array().exp(), std::exp(best_theta[d]), 1e-8};
  double noise = est_noise ? std::exp(best_theta[d + 1]) : fixed_noise;
  return GPModel(kernel, mean, noise, tf).conditioned(X, Y);
}

std::vector<LooPoint> gp_loo(const GPModel& gp) {
  const Eigen::Index n = static_cast<Eigen::Index>(gp.training_size());
  if (n < 3) throw ParameterError("gp_loo needs at least 3 training points");
  Matrix Kinv = gp.chol_.solve(Matrix::Identity(n, n));
  const double ys = gp.tf_.y_scale;
  std::vector<LooPoint> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double kii = Kinv(i, i);
    double resid_std = gp.alpha_[i] / kii;  // y_i - mu_{-i}, standardized units
    LooPoint& pt = out[static_cast<std::size_t>(i)];
    pt.variance = ys * ys / kii;
    pt.mean = gp.Y_[i] - ys * resid_std;
    pt.residual = resid_std * std::sqrt(kii);
  }
  return out;
}

Emulator Emulator::fit(const Matrix& X, const Matrix& Y, const GpFitOptions& opts) {
  std::vector<GPModel> models;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    GpFitOptions o = opts;
    o.seed = derive_seed(opts.seed, stream::gp_fit, static_cast<std::uint64_t>(j) + 1000);
    models.push_back(gp_fit(X, Y.col(j), o));
  }
  return Emulator(std::move(models));
}

void Emulator::predict(const Vector& x, Vector& mean, Vector& variance) const {
  mean.resize(static_cast<Eigen::Index>(models_.size()));
  variance.resize(mean.size());
  for (std::size_t j = 0; j < models_.size(); ++j) {
    auto p = models_[j].predict(x);
    mean[static_cast<Eigen::Index>(j)] = p.mean;
    variance[static_cast<Eigen::Index>(j)] = p.variance;
  }
}

Emulator Emulator::conditioned(const Matrix& X, const Matrix& Y) const {
  std::vector<GPModel> models;
  for (std::size_t j = 0; j < models_.size(); ++j)
    models.push_back(models_[j].conditioned(X, Y.col(static_cast<Eigen::Index>(j))));
  return Emulator(std::move(models));
}

}  // namespace calibr8
