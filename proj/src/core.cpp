#include "calibr8/core.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double std_normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

struct TruncationMass {
  double alpha, beta, z;
};

TruncationMass truncation(const Dimension& d) {
  double a = (d.lower - d.prior.mean) / d.prior.sd;
  double b = (d.upper - d.prior.mean) / d.prior.sd;
  return {a, b, std_normal_cdf(b) - std_normal_cdf(a)};
}

}  // namespace

double Dimension::log_density(double v) const {
  if (!(v >= lower && v <= upper)) return kNegInf;
  if (prior.kind == PriorSpec::Kind::uniform) return -std::log(upper - lower);
  auto t = truncation(*this);
  double z = (v - prior.mean) / prior.sd;
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(prior.sd) - std::log(t.z);
}

double Dimension::cdf(double v) const {
  if (v <= lower) return 0.0;
  if (v >= upper) return 1.0;
  if (prior.kind == PriorSpec::Kind::uniform) return (v - lower) / (upper - lower);
  auto t = truncation(*this);
  return (std_normal_cdf((v - prior.mean) / prior.sd) - std_normal_cdf(t.alpha)) / t.z;
}

double Dimension::quantile(double p) const {
  p = std::clamp(p, 0.0, 1.0);
  if (prior.kind == PriorSpec::Kind::uniform) return lower + p * (upper - lower);
  auto t = truncation(*this);
  double q = std_normal_cdf(t.alpha) + p * t.z;
  q = std::clamp(q, std::numeric_limits<double>::min(), 1.0 - 1e-16);
  return std::clamp(prior.mean + prior.sd * std_normal_quantile(q), lower, upper);
}

double Dimension::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (prior.kind == PriorSpec::Kind::uniform) return lower + unif(rng) * (upper - lower);
  return quantile(unif(rng));
}

double Dimension::mean() const {
  if (prior.kind == PriorSpec::Kind::uniform) return 0.5 * (lower + upper);
  auto t = truncation(*this);
  return prior.mean + prior.sd * (std_normal_pdf(t.alpha) - std_normal_pdf(t.beta)) / t.z;
}

double Dimension::variance() const {
  if (prior.kind == PriorSpec::Kind::uniform) return (upper - lower) * (upper - lower) / 12.0;
  auto t = truncation(*this);
  double pa = std_normal_pdf(t.alpha), pb = std_normal_pdf(t.beta);
  // phi(+-inf) * inf terms vanish; guard the infinite-bound products.
  double ta = std::isfinite(t.alpha) ? t.alpha * pa : 0.0;
  double tb = std::isfinite(t.beta) ? t.beta * pb : 0.0;
  double r = (pa - pb) / t.z;
  return prior.sd * prior.sd * (1.0 + (ta - tb) / t.z - r * r);
}

ParameterSpace::ParameterSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {
  for (const auto& d : dims_) {
    if (!(d.lower < d.upper))
      throw ParameterError("dimension '" + d.name + "': lower must be < upper");
    if (d.prior.kind == PriorSpec::Kind::truncated_normal && !(d.prior.sd > 0.0))
      throw ParameterError("dimension '" + d.name + "': truncated-normal sd must be > 0");
  }
}

std::vector<std::string> ParameterSpace::names() const {
  std::vector<std::string> out;
  for (const auto& d : dims_) out.push_back(d.name);
  return out;
}

bool ParameterSpace::contains(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dims_.size()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (!(x[i] >= dims_[i].lower && x[i] <= dims_[i].upper)) return false;
  return true;
}

void ParameterSpace::check_contains(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dims_.size())
    throw ParameterError("point has " + std::to_string(x.size()) + " coordinates, space has " +
                         std::to_string(dims_.size()));
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (!(x[i] >= dims_[i].lower && x[i] <= dims_[i].upper)) {
      std::ostringstream os;
      os << "coordinate '" << dims_[i].name << "' = " << x[i] << " outside [" << dims_[i].lower << ", "
         << dims_[i].upper << "]";
      throw DomainError(os.str());
    }
  }
}

double ParameterSpace::log_prior(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dims_.size()) return kNegInf;
  double lp = 0.0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    lp += dims_[i].log_density(x[i]);
    if (lp == kNegInf) return lp;
  }
  return lp;
}

Vector ParameterSpace::sample_prior(Rng& rng) const {
  Vector x(dim());
  for (std::size_t i = 0; i < dims_.size(); ++i) x[i] = dims_[i].sample(rng);
  return x;
}

Vector ParameterSpace::prior_mean() const {
  Vector x(dim());
  for (std::size_t i = 0; i < dims_.size(); ++i) x[i] = dims_[i].mean();
  return x;
}

Vector ParameterSpace::prior_sd() const {
  Vector x(dim());
  for (std::size_t i = 0; i < dims_.size(); ++i) x[i] = std::sqrt(dims_[i].variance());
  return x;
}

Vector ParameterSpace::lower() const {
  Vector x(dim());
  for (std::size_t i = 0; i < dims_.size(); ++i) x[i] = dims_[i].lower;
  return x;
}

Vector ParameterSpace::upper() const {
  Vector x(dim());
  for (std::size_t i = 0; i < dims_.size(); ++i) x[i] = dims_[i].upper;
  return x;
}

Vector ParameterSpace::clamp(const Vector& x) const { return x.cwiseMax(lower()).cwiseMin(upper()); }

BlackBoxSimulator::BlackBoxSimulator(Info info, Evaluator evaluator, std::optional<ParameterSpace> domain)
    : info_(std::move(info)),
      evaluator_(std::move(evaluator)),
      domain_(std::move(domain)),
      state_(std::make_shared<State>()) {
  if (!evaluator_) throw ParameterError("simulator '" + info_.name + "' has no evaluator");
  if (domain_ && domain_->dim() != info_.input_dim)
    throw ParameterError("simulator '" + info_.name + "': domain dimension does not match input_dim");
}

BlackBoxSimulator BlackBoxSimulator::detached() const { return BlackBoxSimulator(info_, evaluator_, domain_); }

Vector evaluate(const BlackBoxSimulator& sim, const Vector& x, const ControlInput& u, std::uint64_t seed) {
  if (static_cast<std::size_t>(x.size()) != sim.input_dim())
    throw ParameterError("simulator '" + sim.info().name + "' expects " + std::to_string(sim.input_dim()) +
                         " inputs, got " + std::to_string(x.size()));
  if (u.dim() != sim.control_dim())
    throw ParameterError("simulator '" + sim.info().name + "' expects " + std::to_string(sim.control_dim()) +
                         " control inputs, got " + std::to_string(u.dim()));
  if (sim.domain_) sim.domain_->check_contains(x);

  auto& st = *sim.state_;
  std::uint64_t n = st.count.fetch_add(1) + 1;
  std::uint64_t limit = st.budget.load();
  if (limit != 0 && n > limit) {
    st.count.fetch_sub(1);
    throw BudgetExhausted("simulator evaluation budget of " + std::to_string(limit) + " exhausted");
  }

  Vector out = sim.evaluator_(x, u.values, sim.stochastic() ? seed : 0);
  std::vector<double> xv(x.data(), x.data() + x.size());
  if (static_cast<std::size_t>(out.size()) != sim.output_dim())
    throw EvaluationError("simulator '" + sim.info().name + "' returned " + std::to_string(out.size()) +
                              " outputs, expected " + std::to_string(sim.output_dim()),
                          xv);
  if (!out.allFinite()) throw EvaluationError("simulator '" + sim.info().name + "' returned non-finite output", xv);
  return out;
}

Matrix build_design(const ParameterSpace& space, std::size_t n, DesignMethod method, std::uint64_t seed) {
  if (n < 1) throw ParameterError("design size must be >= 1");
  const std::size_t d = space.dim();
  if (d == 0) throw ParameterError("design over an empty parameter space");
  Matrix unit(n, d);
  Rng rng = make_rng(seed, stream::design);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  switch (method) {
    case DesignMethod::grid: {
      auto per = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), 1.0 / d)));
      std::size_t total = 1;
      for (std::size_t k = 0; k < d; ++k) total *= per;
      if (total != n)
        throw ParameterError("grid design needs n = k^d; " + std::to_string(n) + " is not a perfect power of " +
                             std::to_string(d));
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i;
        for (std::size_t k = 0; k < d; ++k) {
          unit(i, k) = (static_cast<double>(rem % per) + 0.5) / static_cast<double>(per);
          rem /= per;
        }
      }
      break;
    }
    case DesignMethod::latin_hypercube: {
      std::vector<std::size_t> perm(n);
      for (std::size_t k = 0; k < d; ++k) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < n; ++i)
          unit(i, k) = (static_cast<double>(perm[i]) + unif(rng)) / static_cast<double>(n);
      }
      break;
    }
    case DesignMethod::uniform_random:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) unit(i, k) = unif(rng);
      break;
  }

  Matrix out(n, d);
  for (std::size_t k = 0; k < d; ++k) {
    const auto& dim = space[k];
    for (std::size_t i = 0; i < n; ++i)
      out(i, k) = std::min(dim.upper, dim.lower + unit(i, k) * (dim.upper - dim.lower));
  }
  return out;
}

std::string to_string(DesignMethod m) {
  switch (m) {
    case DesignMethod::latin_hypercube: return "latin-hypercube";
    case DesignMethod::uniform_random: return "uniform-random";
    case DesignMethod::grid: return "grid";
  }
  return "unknown";
}

DesignMethod design_method_from_string(const std::string& s) {
  if (s == "latin-hypercube") return DesignMethod::latin_hypercube;
  if (s == "uniform-random") return DesignMethod::uniform_random;
  if (s == "grid") return DesignMethod::grid;
  throw ConfigurationError("unknown design method '" + s + "'");
}

void Ensemble::append(const Vector& x, const ControlInput& u, const Vector& f) {
  auto grow = [](Matrix& m, const Vector& row) {
    if (m.rows() == 0) m.resize(0, row.size());
    m.conservativeResize(m.rows() + 1, Eigen::NoChange);
    m.row(m.rows() - 1) = row.transpose();
  };
  grow(inputs, x);
  grow(controls, u.values);
  grow(outputs, f);
}

Ensemble run_ensemble(const BlackBoxSimulator& sim, const Matrix& design, const ControlInput& u,
                      std::uint64_t seed, unsigned parallelism, FailurePolicy policy,
                      const std::string& design_tag) {
  const auto n = static_cast<std::size_t>(design.rows());
  if (n == 0) throw ParameterError("run_ensemble: empty design");

  std::vector<std::optional<Vector>> rows(n);
  parallel_for(n, parallelism, [&](std::size_t i) {
    Vector x = design.row(static_cast<Eigen::Index>(i)).transpose();
    try {
      rows[i] = evaluate(sim, x, u, derive_seed(seed, stream::ensemble, i));
    } catch (const EvaluationError& e) {
      if (policy == FailurePolicy::skip) return;
      throw EvaluationError(std::string(e.what()) + " (design point " + std::to_string(i) + ")", e.x(),
                            static_cast<long>(i));
    }
  });

  Ensemble ens;
  ens.seed = seed;
  ens.design = design_tag;
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.has_value();
  ens.inputs.resize(static_cast<Eigen::Index>(ok), design.cols());
  ens.controls.resize(static_cast<Eigen::Index>(ok), u.values.size());
  ens.outputs.resize(static_cast<Eigen::Index>(ok), static_cast<Eigen::Index>(sim.output_dim()));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!rows[i]) {
      ens.failed.push_back(i);
      continue;
    }
    ens.inputs.row(row) = design.row(static_cast<Eigen::Index>(i));
    if (u.values.size() > 0) ens.controls.row(row) = u.values.transpose();
    ens.outputs.row(row) = rows[i]->transpose();
    ++row;
  }
  return ens;
}

}  // namespace calibr8
