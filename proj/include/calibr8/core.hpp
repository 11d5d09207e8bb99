#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "calibr8/random.hpp"

namespace calibr8 {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct PriorSpec {
  enum class Kind { uniform, truncated_normal };
  Kind kind = Kind::uniform;
  double mean = 0.0;  // truncated-normal only
  double sd = 1.0;

  static PriorSpec uniform() { return {}; }
  static PriorSpec truncated_normal(double mean, double sd) { return {Kind::truncated_normal, mean, sd}; }
};

/// One bounded coordinate of the calibration input.
struct Dimension {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  PriorSpec prior;

  /// Normalized on [lower, upper]; -inf outside.
  double log_density(double v) const;
  double cdf(double v) const;
  double quantile(double p) const;
  double sample(Rng& rng) const;
  double mean() const;
  double variance() const;
};

class ParameterSpace {
 public:
  ParameterSpace() = default;
  /// Throws ParameterError when lower >= upper or a truncated-normal sd <= 0.
  explicit ParameterSpace(std::vector<Dimension> dims);

  std::size_t dim() const noexcept { return dims_.size(); }
  const Dimension& operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<Dimension>& dims() const noexcept { return dims_; }
  std::vector<std::string> names() const;

  bool contains(const Vector& x) const;
  /// Throws DomainError naming the first offending coordinate.
  void check_contains(const Vector& x) const;
  double log_prior(const Vector& x) const;
  Vector sample_prior(Rng& rng) const;
  Vector prior_mean() const;
  Vector prior_sd() const;
  Vector lower() const;
  Vector upper() const;
  Vector clamp(const Vector& x) const;

 private:
  std::vector<Dimension> dims_;
};

struct ControlInput {
  Vector values;  // may be empty
  std::string label;

  static ControlInput none() { return {Vector(0), {}}; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// Black-box map (x, u, seed) -> output vector. Copies share the evaluator
/// and the evaluation counter.
class BlackBoxSimulator {
 public:
  using Evaluator = std::function<Vector(const Vector& x, const Vector& u, std::uint64_t seed)>;

  struct Info {
    std::string name;
    std::size_t input_dim = 1;
    std::size_t control_dim = 0;
    std::size_t output_dim = 1;
    bool stochastic = false;
  };

  BlackBoxSimulator(Info info, Evaluator evaluator, std::optional<ParameterSpace> domain = std::nullopt);

  const Info& info() const noexcept { return info_; }
  std::size_t input_dim() const noexcept { return info_.input_dim; }
  std::size_t control_dim() const noexcept { return info_.control_dim; }
  std::size_t output_dim() const noexcept { return info_.output_dim; }
  bool stochastic() const noexcept { return info_.stochastic; }
  const std::optional<ParameterSpace>& domain() const noexcept { return domain_; }

  /// Number of evaluations performed through this simulator and its copies.
  std::uint64_t evaluations() const noexcept { return state_->count.load(); }
  void reset_evaluations() noexcept { state_->count.store(0); }
  /// Evaluations beyond `limit` throw BudgetExhausted. 0 = unlimited.
  void set_budget(std::uint64_t limit) noexcept { state_->budget.store(limit); }
  std::uint64_t budget() const noexcept { return state_->budget.load(); }

  /// A copy with its own counter and no budget.
  BlackBoxSimulator detached() const;

 private:
  friend Vector evaluate(const BlackBoxSimulator&, const Vector&, const ControlInput&, std::uint64_t);

  struct State {
    std::atomic<std::uint64_t> count{0};
    std::atomic<std::uint64_t> budget{0};
  };

  Info info_;
  Evaluator evaluator_;
  std::optional<ParameterSpace> domain_;
  std::shared_ptr<State> state_;
};

/// Deterministic simulators ignore `seed`. Throws DomainError for x outside
/// the simulator's domain, ParameterError on dimension mismatch,
/// EvaluationError on non-finite output and BudgetExhausted past the budget.
Vector evaluate(const BlackBoxSimulator& sim, const Vector& x, const ControlInput& u, std::uint64_t seed);

enum class DesignMethod { latin_hypercube, uniform_random, grid };

/// n x d matrix of design points inside the box of `space`.
Matrix build_design(const ParameterSpace& space, std::size_t n, DesignMethod method, std::uint64_t seed);

std::string to_string(DesignMethod m);
DesignMethod design_method_from_string(const std::string& s);

struct Ensemble {
  Matrix inputs;    // N x d
  Matrix controls;  // N x c
  Matrix outputs;   // N x m
  std::uint64_t seed = 0;
  std::string design;
  std::vector<std::size_t> failed;  // design indices skipped under FailurePolicy::skip

  std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
  void append(const Vector& x, const ControlInput& u, const Vector& f);
};

enum class FailurePolicy { abort, skip };

/// Evaluates every design row; point i uses seed derive_seed(seed, ensemble, i)
/// so the result does not depend on `parallelism`.
Ensemble run_ensemble(const BlackBoxSimulator& sim, const Matrix& design, const ControlInput& u,
                      std::uint64_t seed, unsigned parallelism = 1,
                      FailurePolicy policy = FailurePolicy::abort, const std::string& design_tag = {});

}  // namespace calibr8
