#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "calibr8/error.hpp"
#include "calibr8/gp.hpp"

using namespace calibr8;

namespace {

GPModel prior(KernelKind kind, Vector ls, double sv, double noise = 0.0) {
  std::size_t d = static_cast<std::size_t>(ls.size());
  return GPModel(Kernel{kind, std::move(ls), sv, 1e-8}, MeanFunction{}, noise, GPModel::Transform::identity(d));
}

/// One draw from a zero-mean GP prior at the rows of X.
Vector sample_prior(const GPModel& gp, const Matrix& X, Rng& rng) {
  Matrix K = gp.prior_covariance(X);
  K.diagonal().array() += 1e-10;
  Eigen::LLT<Matrix> L(K);
  std::normal_distribution<double> n;
  Vector z(X.rows());
  for (auto& v : z) v = n(rng);
  return L.matrixL() * z;
}

Matrix random_inputs(int n, int d, Rng& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) X(i, k) = u(rng);
  return X;
}

double branin_like(const Vector& x) { return std::sin(5 * x[0]) + 0.5 * std::cos(3 * x[1]) + x[0] * x[1]; }

}  // namespace

TEST_CASE("kernel basics") {
  Kernel k{KernelKind::squared_exponential, Vector::Constant(2, 0.5), 2.0, 1e-8};
  Vector a(2), b(2);
  a << 0.1, 0.2;
  b << 0.4, -0.2;
  double r2 = (0.3 * 0.3 + 0.4 * 0.4) / 0.25;
  CHECK(k(a, b) == doctest::Approx(2.0 * std::exp(-0.5 * r2)));
  CHECK(k(a, a) == doctest::Approx(2.0));
  Matrix X(2, 2);
  X.row(0) = a;
  X.row(1) = b;
  CHECK(k.gram(X)(0, 0) == doctest::Approx(2.0 * (1 + 1e-8)).epsilon(1e-14));
  Kernel m{KernelKind::matern52, Vector::Constant(2, 0.5), 2.0, 0.0};
  double r = std::sqrt(5.0 * r2);
  CHECK(m(a, b) == doctest::Approx(2.0 * (1 + r + r * r / 3) * std::exp(-r)));
  Vector row = k.row(X, b);
  CHECK(row[0] == doctest::Approx(k(a, b)));
  CHECK(kernel_kind_from_string(to_string(KernelKind::matern52)) == KernelKind::matern52);
}

TEST_CASE("noise-free interpolation") {
  Rng rng(11);
  for (KernelKind kind : {KernelKind::squared_exponential, KernelKind::matern52}) {
    Matrix X = random_inputs(25, 2, rng);
    Vector Y(25);
    for (int i = 0; i < 25; ++i) Y[i] = 10.0 + 3.0 * branin_like(X.row(i).transpose());
    GPModel gp = gp_fit(X, Y, {kind, MeanFunction::Kind::constant, 0.0, 4, 1});
    for (int i = 0; i < 25; ++i) {
      auto p = gp.predict(X.row(i).transpose());
      CHECK(std::abs(p.mean - Y[i]) < 1e-8);
      CHECK(p.variance <= 1e-8 * gp.signal_variance_original());
    }
  }
  Matrix X2(2, 1);
  X2 << 0.0, 1.0;
  Vector Y2(2);
  Y2 << -1.0, 4.0;
  GPModel two = gp_fit(X2, Y2);
  CHECK(std::abs(two.predict(Vector::Constant(1, 0.0)).mean + 1.0) < 1e-8);
  CHECK(std::abs(two.predict(Vector::Constant(1, 1.0)).mean - 4.0) < 1e-8);
}

TEST_CASE("constant data") {
  Matrix X(6, 1);
  X << 0, 0.2, 0.4, 0.6, 0.8, 1.0;
  Vector Y = Vector::Constant(6, 5.0);
  GPModel gp = gp_fit(X, Y, {KernelKind::squared_exponential, MeanFunction::Kind::constant, 0.0, 3, 0});
  for (double q : {-1.0, 0.1, 0.55, 3.0}) CHECK(gp.predict(Vector::Constant(1, q)).mean == doctest::Approx(5.0));
  CHECK(gp.kernel().signal_variance <= 1e-5);
}

TEST_CASE("far-field prediction reverts to the prior") {
  GPModel gp = prior(KernelKind::squared_exponential, Vector::Constant(1, 0.2), 3.0);
  Matrix X(3, 1);
  X << 0.0, 0.3, 0.5;
  Vector Y(3);
  Y << 1.0, -2.0, 0.5;
  GPModel c = gp.conditioned(X, Y);
  auto p = c.predict(Vector::Constant(1, 0.5 + 10 * 0.2));
  CHECK(std::abs(p.mean) < 0.01);
  CHECK(p.variance == doctest::Approx(3.0).epsilon(0.01));
}

TEST_CASE("two symmetric points, midpoint query") {
  for (KernelKind kind : {KernelKind::squared_exponential, KernelKind::matern52}) {
    GPModel gp = prior(kind, Vector::Constant(1, 0.7), 1.5);
    Matrix X(2, 1);
    X << -0.4, 0.4;
    Vector Y(2);
    Y << 1.0, 3.0;
    GPModel c = gp.conditioned(X, Y);
    double k12 = gp.kernel()(X.row(0).transpose(), X.row(1).transpose());
    double k0 = gp.kernel()(Vector::Zero(1), X.row(1).transpose());
    double kdiag = 1.5 * (1 + 1e-8);
    double expect = k0 * (Y[0] + Y[1]) / (kdiag + k12);
    CHECK(c.predict(Vector::Zero(1)).mean == doctest::Approx(expect).epsilon(1e-10));
    CHECK(c.predict(Vector::Zero(1)).mean == doctest::Approx(0.5 * (Y[0] + Y[1]) * 2 * k0 / (kdiag + k12)));
  }
}

TEST_CASE("adding data never increases variance") {
  Rng rng(5);
  GPModel gp = prior(KernelKind::matern52, Vector::Constant(2, 0.3), 1.0, 1e-6);
  Matrix X = random_inputs(30, 2, rng);
  Vector Y(30);
  for (int i = 0; i < 30; ++i) Y[i] = branin_like(X.row(i).transpose());
  Matrix Q = random_inputs(100, 2, rng);
  GPModel prev = gp.conditioned(X.topRows(5), Y.head(5));
  for (int n = 6; n <= 30; ++n) {
    GPModel next = gp.conditioned(X.topRows(n), Y.head(n));
    for (int q = 0; q < Q.rows(); ++q) {
      Vector x = Q.row(q).transpose();
      CHECK(next.predict(x).variance <= prev.predict(x).variance + 1e-10);
    }
    prev = next;
  }
}

TEST_CASE("permuting training rows leaves predictions unchanged") {
  Rng rng(9);
  Matrix X = random_inputs(20, 2, rng);
  Vector Y(20);
  for (int i = 0; i < 20; ++i) Y[i] = branin_like(X.row(i).transpose());
  GPModel gp = prior(KernelKind::squared_exponential, Vector::Constant(2, 0.4), 1.0);
  std::vector<int> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix Xp(20, 2);
  Vector Yp(20);
  for (int i = 0; i < 20; ++i) {
    Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
    Yp[i] = Y[perm[static_cast<std::size_t>(i)]];
  }
  GPModel a = gp.conditioned(X, Y), b = gp.conditioned(Xp, Yp);
  for (int q = 0; q < 30; ++q) {
    Vector x = random_inputs(1, 2, rng).row(0).transpose();
    CHECK(std::abs(a.predict(x).mean - b.predict(x).mean) < 1e-10);
    CHECK(std::abs(a.predict(x).variance - b.predict(x).variance) < 1e-10);
  }
}

TEST_CASE("marginal likelihood gradient matches finite differences") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-1.5, 1.0);
  for (KernelKind kind : {KernelKind::squared_exponential, KernelKind::matern52}) {
    for (bool est_noise : {false, true}) {
      for (int rep = 0; rep < 5; ++rep) {
        Matrix X = random_inputs(15, 2, rng);
        Vector r(15);
        for (int i = 0; i < 15; ++i) r[i] = branin_like(X.row(i).transpose());
        Vector theta(est_noise ? 4 : 3);
        for (auto& t : theta) t = u(rng);
        if (est_noise) theta[3] = std::log(0.05);
        auto ml = log_marginal_likelihood(X, r, kind, theta, est_noise, 1e-6);
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
          double h = 1e-5;
          Vector tp = theta, tm = theta;
          tp[k] += h;
          tm[k] -= h;
          double fd = (log_marginal_likelihood(X, r, kind, tp, est_noise, 1e-6).value -
                       log_marginal_likelihood(X, r, kind, tm, est_noise, 1e-6).value) /
                      (2 * h);
          CHECK(std::abs(ml.gradient[k] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
}

TEST_CASE("fitted model reports its own marginal likelihood") {
  Rng rng(2);
  Matrix X = random_inputs(12, 1, rng);
  Vector Y = X.col(0).array().sin();
  GPModel gp = gp_fit(X, Y, {KernelKind::squared_exponential, MeanFunction::Kind::zero, 0.0, 2, 0});
  Vector ys = (Y.array() - gp.transform().y_offset) / gp.transform().y_scale;
  Matrix Xu = (X.array() - gp.transform().x_offset[0]) / gp.transform().x_scale[0];
  Vector theta(2);
  theta << std::log(gp.kernel().lengthscales[0]), std::log(gp.kernel().signal_variance);
  auto ml = log_marginal_likelihood(Xu, ys, KernelKind::squared_exponential, theta, false, 0.0);
  CHECK(ml.value == doctest::Approx(gp.log_marginal_likelihood()).epsilon(1e-8));
}

TEST_CASE("lengthscale recovery from data drawn from a known GP") {
  GPModel truth = prior(KernelKind::squared_exponential, Vector::Constant(1, 0.3), 1.0);
  Matrix X = Vector::LinSpaced(40, 0.0, 1.0);
  int hits = 0;
  for (int rep = 0; rep < 50; ++rep) {
    Rng rng(1000 + rep);
    Vector Y = sample_prior(truth, X, rng);
    GPModel fit = gp_fit(X, Y, {KernelKind::squared_exponential, MeanFunction::Kind::zero, 0.0, 4,
                                static_cast<std::uint64_t>(rep)});
    double ls = fit.lengthscales_original()[0];
    if (ls > 0.15 && ls < 0.6) ++hits;
  }
  MESSAGE("lengthscale within factor 2 in " << hits << "/50");
  CHECK(hits >= 40);
}

TEST_CASE("loo matches explicit refits") {
  Rng rng(4);
  Matrix X = random_inputs(12, 2, rng);
  Vector Y(12);
  for (int i = 0; i < 12; ++i) Y[i] = 2.0 + branin_like(X.row(i).transpose());
  GPModel gp = gp_fit(X, Y, {KernelKind::matern52, MeanFunction::Kind::zero, std::nullopt, 3, 2});
  auto loo = gp_loo(gp);
  for (int i = 0; i < 12; ++i) {
    Matrix Xr(11, 2);
    Vector Yr(11);
    for (int j = 0, k = 0; j < 12; ++j) {
      if (j == i) continue;
      Xr.row(k) = X.row(j);
      Yr[k++] = Y[j];
    }
    GPModel less = gp.conditioned(Xr, Yr);
    auto p = less.predict(X.row(i).transpose());
    double var = p.variance + gp.noise_variance() * gp.transform().y_scale * gp.transform().y_scale;
    const auto& l = loo[static_cast<std::size_t>(i)];
    CHECK(l.mean == doctest::Approx(p.mean).epsilon(1e-6));
    CHECK(l.variance == doctest::Approx(var).epsilon(1e-5));
    CHECK(l.residual == doctest::Approx((Y[i] - l.mean) / std::sqrt(l.variance)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(gp_loo(gp.conditioned(X.topRows(2), Y.head(2))), ParameterError);
}

TEST_CASE("loo special cases") {
  GPModel gp = prior(KernelKind::squared_exponential, Vector::Constant(1, 0.3), 1.0);
  Matrix X(5, 1);
  X << 0.0, 0.25, 0.5, 0.5, 0.9;
  Vector Y(5);
  Y << 0.1, 0.7, -0.3, -0.3, 0.4;
  auto loo = gp_loo(gp.conditioned(X, Y));
  CHECK(std::abs(loo[2].mean - Y[2]) < 1e-6);
  CHECK(std::abs(loo[3].mean - Y[3]) < 1e-6);

  Matrix L(3, 1);
  L << 0.0, 1.0, 2.0;
  Vector line = (2.0 * L.col(0).array() + 1.0).matrix();
  GPModel lin = gp_fit(L, line, {KernelKind::squared_exponential, MeanFunction::Kind::linear, 0.0, 2, 0});
  for (const auto& p : gp_loo(lin)) CHECK(std::abs(p.residual) < 1e-4);
}

TEST_CASE("loo residuals are calibrated under the generating GP") {
  GPModel truth = prior(KernelKind::matern52, Vector::Constant(1, 0.2), 1.0, 1e-4);
  int inside = 0, total = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng rng(500 + rep);
    Matrix X = random_inputs(20, 1, rng);
    Vector Y = sample_prior(truth, X, rng);
    std::normal_distribution<double> n(0, 1e-2);
    for (auto& y : Y) y += n(rng);
    for (const auto& p : gp_loo(truth.conditioned(X, Y))) {
      ++total;
      inside += std::abs(p.residual) <= 2.0;
    }
  }
  double frac = static_cast<double>(inside) / total;
  MESSAGE("loo coverage " << frac);
  CHECK(frac > 0.94);
  CHECK(frac < 0.97);
}

TEST_CASE("joint prediction agrees with marginal prediction") {
  Rng rng(8);
  Matrix X = random_inputs(10, 1, rng);
  Vector Y = X.col(0).array().cos();
  GPModel gp = gp_fit(X, Y);
  Matrix Q = random_inputs(4, 1, rng);
  Vector m;
  Matrix C;
  gp.predict_joint(Q, m, C);
  for (int i = 0; i < 4; ++i) {
    auto p = gp.predict(Q.row(i).transpose());
    CHECK(m[i] == doctest::Approx(p.mean).epsilon(1e-10));
    CHECK(std::abs(C(i, i) - p.variance) < 1e-10);
  }
  CHECK((C - C.transpose()).norm() == 0.0);
}

TEST_CASE("emulator fits one GP per output") {
  Rng rng(3);
  Matrix X = random_inputs(15, 2, rng);
  Matrix Y(15, 2);
  for (int i = 0; i < 15; ++i) {
    Y(i, 0) = branin_like(X.row(i).transpose());
    Y(i, 1) = X(i, 0) - X(i, 1);
  }
  Emulator em = Emulator::fit(X, Y, {KernelKind::squared_exponential, MeanFunction::Kind::constant, 0.0, 2, 1});
  CHECK(em.outputs() == 2);
  CHECK(em.training_size() == 15);
  Vector m, v;
  em.predict(X.row(3).transpose(), m, v);
  CHECK(std::abs(m[0] - Y(3, 0)) < 1e-8);
  CHECK(std::abs(m[1] - Y(3, 1)) < 1e-8);
  Emulator c = em.conditioned(X.topRows(10), Y.topRows(10));
  CHECK(c.training_size() == 10);
  CHECK(c.model(0).kernel().lengthscales == em.model(0).kernel().lengthscales);
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(gp_fit(Matrix::Zero(1, 1), Vector::Zero(1)), ParameterError);
  CHECK_THROWS_AS(prior(KernelKind::squared_exponential, Vector::Constant(1, -1.0), 1.0), ParameterError);
  GPModel gp = prior(KernelKind::squared_exponential, Vector::Constant(1, 1.0), 1.0);
  CHECK_THROWS_AS(gp.predict(Vector::Zero(2)), ParameterError);
}
