#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calibr8/core.hpp"

namespace calibr8 {

enum class KernelKind { squared_exponential, matern52 };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

/// Stationary ARD kernel k(a, b) = signal_variance * h(r),
/// r^2 = sum_k ((a_k - b_k) / lengthscale_k)^2. `jitter` is relative to the
/// signal variance. It is added on the diagonal of Gram matrices and, in a
/// conditioned model, to the covariance between a query and a training input
/// it coincides with, so noise-free models interpolate exactly.
struct Kernel {
  KernelKind kind = KernelKind::squared_exponential;
  Vector lengthscales;
  double signal_variance = 1.0;
  double jitter = 1e-8;

  /// h as a function of the scaled squared distance.
  double correlation(double r2) const;
  double operator()(const Vector& a, const Vector& b) const;
  /// |A| x |B| covariance without jitter.
  Matrix cross(const Matrix& A, const Matrix& B) const;
  /// Covariance of X with itself, jitter included on the diagonal.
  Matrix gram(const Matrix& X) const;
  /// k(X_i, q) for every row of X, through the SIMD distance kernel.
  Vector row(const Matrix& X, const Vector& q) const;
};

struct MeanFunction {
  enum class Kind { zero, constant, linear };
  Kind kind = Kind::zero;
  double intercept = 0.0;
  Vector slope;  // linear only

  double operator()(const Vector& x) const;
  Vector at(const Matrix& X) const;
};

std::string to_string(MeanFunction::Kind k);
MeanFunction::Kind mean_kind_from_string(const std::string& s);

struct LooPoint {
  double mean = 0.0;
  double variance = 0.0;
  double residual = 0.0;  // (y_i - mean) / sqrt(variance)
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
  bool clamped = false;  // raw variance was below -1e-10 before clamping to 0
};

/// Gaussian-process regression model. Hyperparameters live on the
/// standardized scale described by `Transform`; all public inputs and
/// outputs are in original units. Immutable after construction.
class GPModel {
 public:
  struct Transform {
    Vector x_offset, x_scale;  // x_unit = (x - offset) / scale
    double y_offset = 0.0, y_scale = 1.0;

    static Transform identity(std::size_t d);
  };

  GPModel() = default;
  /// Prior-only model (no training data).
  GPModel(Kernel kernel, MeanFunction mean, double noise_variance, Transform transform);

  /// Same hyperparameters and transform, conditioned on (X, Y). Jitter
  /// escalates x10 from kernel.jitter up to 1e-4 before ConditioningError.
  GPModel conditioned(const Matrix& X, const Vector& Y) const;

  GpPrediction predict(const Vector& x) const;
  /// Joint posterior of the latent function at the rows of Xs.
  void predict_joint(const Matrix& Xs, Vector& mean, Matrix& cov) const;

  /// Prior mean and covariance at the rows of W, original units, jitter included.
  Vector prior_mean(const Matrix& W) const;
  Matrix prior_covariance(const Matrix& W) const;

  double log_marginal_likelihood() const { return lml_; }

  const Kernel& kernel() const noexcept { return kernel_; }
  const MeanFunction& mean() const noexcept { return mean_; }
  double noise_variance() const noexcept { return noise_; }
  const Transform& transform() const noexcept { return tf_; }
  /// Signal variance in squared output units.
  double signal_variance_original() const { return kernel_.signal_variance * tf_.y_scale * tf_.y_scale; }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(tf_.x_offset.size()); }
  std::size_t training_size() const noexcept { return static_cast<std::size_t>(X_.rows()); }
  const Matrix& training_inputs() const noexcept { return X_; }
  const Vector& training_outputs() const noexcept { return Y_; }
  double jitter_used() const noexcept { return jitter_used_; }

  /// Lengthscales in original input units.
  Vector lengthscales_original() const { return kernel_.lengthscales.cwiseProduct(tf_.x_scale); }

  friend std::vector<LooPoint> gp_loo(const GPModel& gp);

 private:
  Vector to_unit(const Vector& x) const;
  Matrix to_unit(const Matrix& X) const;
  void add_nugget(const Matrix& Xu, const Vector& q, Vector& k) const;

  Kernel kernel_;
  MeanFunction mean_;
  double noise_ = 0.0;  // standardized units
  Transform tf_;
  Matrix X_, Xu_;
  Vector Y_, resid_;  // resid_ = standardized Y minus mean function
  Eigen::LLT<Matrix> chol_;
  Vector alpha_;
  double lml_ = 0.0;
  double jitter_used_ = 0.0;
};

struct GpFitOptions {
  KernelKind kernel = KernelKind::squared_exponential;
  MeanFunction::Kind mean = MeanFunction::Kind::zero;
  std::optional<double> fixed_noise = 0.0;  // nullopt: estimate the noise variance
  int restarts = 8;
  std::uint64_t seed = 0;
  int max_iter = 200;
};

/// Empirical-Bayes fit: inputs mapped to the unit box and outputs to zero
/// mean / unit variance, mean function fit by least squares, then kernel
/// hyperparameters maximize the log marginal likelihood over `restarts`
/// multi-start BFGS runs in log space. Ties go to the lower restart index.
GPModel gp_fit(const Matrix& X, const Vector& Y, const GpFitOptions& opts = {});

/// Leave-one-out predictions (y-space, original units) from the full
/// factorization via the rank-one identities. Requires N >= 3.
std::vector<LooPoint> gp_loo(const GPModel& gp);

/// Log marginal likelihood of standardized residuals r at unit-box inputs Xu,
/// with log hyperparameters [log l_1..d, log signal_variance, (log noise)].
/// The gradient is analytic.
struct MarginalLikelihood {
  double value = 0.0;
  Vector gradient;
};
MarginalLikelihood log_marginal_likelihood(const Matrix& Xu, const Vector& r, KernelKind kind,
                                           const Vector& log_params, bool estimate_noise, double fixed_noise,
                                           double jitter = 1e-8);

/// Independent GPs, one per output column (observation-space emulator).
class Emulator {
 public:
  Emulator() = default;
  explicit Emulator(std::vector<GPModel> models) : models_(std::move(models)) {}

  static Emulator fit(const Matrix& X, const Matrix& Y, const GpFitOptions& opts = {});

  std::size_t outputs() const noexcept { return models_.size(); }
  const GPModel& model(std::size_t i) const { return models_[i]; }
  const std::vector<GPModel>& models() const noexcept { return models_; }
  std::size_t training_size() const { return models_.empty() ? 0 : models_[0].training_size(); }

  void predict(const Vector& x, Vector& mean, Vector& variance) const;
  /// Same hyperparameters, new data.
  Emulator conditioned(const Matrix& X, const Matrix& Y) const;

 private:
  std::vector<GPModel> models_;
};

}  // namespace calibr8
