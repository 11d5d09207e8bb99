#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "calibr8/gp.hpp"
#include "calibr8/simd.hpp"

using namespace calibr8;
using namespace calibr8::simd;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool close(double a, double b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("scalar kernels against direct loops") {
  const KernelTable& s = scalar_kernels();
  Rng rng(1);
  auto a = randv(13, rng), b = randv(13, rng), w = randv(13, rng, 0.1, 2);
  double ref = 0;
  for (int i = 0; i < 13; ++i) ref += w[i] * (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(close(s.weighted_sq_sum(a.data(), b.data(), w.data(), 13), ref));

  double mref = 0;
  for (int i = 0; i < 13; ++i) mref = std::max(mref, std::abs(a[i] - b[i]) / std::sqrt(w[i]));
  CHECK(close(s.max_standardized(a.data(), b.data(), w.data(), 13), mref));

  Moments m = s.weighted_moments(a.data(), w.data(), 13);
  double sw = 0, swv = 0, swv2 = 0;
  for (int i = 0; i < 13; ++i) {
    sw += w[i];
    swv += w[i] * a[i];
    swv2 += w[i] * a[i] * a[i];
  }
  CHECK(close(m.sum_w, sw));
  CHECK(close(m.sum_wv, swv));
  CHECK(close(m.sum_wv2, swv2));

  std::vector<double> v{1, std::nan(""), 7, -3};
  CHECK(s.max_value(v.data(), v.size()) == 7);
  CHECK(s.max_value(v.data(), 0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("avx2 kernels match the scalar reference") {
  const KernelTable* v = avx2_kernels();
  if (!v || !isa_available(Isa::avx2)) {
    MESSAGE("avx2 not available; equivalence skipped");
    return;
  }
  const KernelTable& s = scalar_kernels();
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 17u, 64u, 1001u}) {
    auto a = randv(n, rng), b = randv(n, rng), w = randv(n, rng, 0.01, 3);
    CHECK(close(s.weighted_sq_sum(a.data(), b.data(), w.data(), n), v->weighted_sq_sum(a.data(), b.data(), w.data(), n)));
    CHECK(close(s.max_standardized(a.data(), b.data(), w.data(), n),
                v->max_standardized(a.data(), b.data(), w.data(), n)));
    Moments ms = s.weighted_moments(a.data(), w.data(), n), mv = v->weighted_moments(a.data(), w.data(), n);
    CHECK(close(ms.sum_w, mv.sum_w));
    CHECK(close(ms.sum_wv, mv.sum_wv));
    CHECK(close(ms.sum_wv2, mv.sum_wv2));
    CHECK(s.max_value(a.data(), n) == v->max_value(a.data(), n));

    for (std::size_t d : {1u, 2u, 5u}) {
      std::vector<std::vector<double>> cols(d);
      std::vector<const double*> ptr(d);
      for (std::size_t k = 0; k < d; ++k) {
        cols[k] = randv(n, rng);
        ptr[k] = cols[k].data();
      }
      auto q = randv(d, rng), il = randv(d, rng, 0.5, 4);
      std::vector<double> o1(n), o2(n);
      s.scaled_sq_dist(ptr.data(), q.data(), il.data(), n, d, o1.data());
      v->scaled_sq_dist(ptr.data(), q.data(), il.data(), n, d, o2.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(close(o1[i], o2[i]));
    }
  }
  std::vector<double> nanv{1, 2, std::nan(""), 9, 3, std::nan(""), 4, 0, 8};
  CHECK(v->max_value(nanv.data(), nanv.size()) == 9);
}

TEST_CASE("dispatch switch gives equivalent GP predictions") {
  Rng rng(3);
  Matrix X(30, 2);
  Vector Y(30);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 30; ++i) {
    X(i, 0) = u(rng);
    X(i, 1) = u(rng);
    Y[i] = std::sin(3 * X(i, 0)) + X(i, 1);
  }
  Kernel k{KernelKind::matern52, Vector::Constant(2, 0.4), 1.0, 1e-8};
  GPModel gp = GPModel(k, MeanFunction{}, 0.0, GPModel::Transform::identity(2)).conditioned(X, Y);
  Matrix Q = Matrix::Random(20, 2);
  Isa before = active_isa();
  force_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  std::vector<GpPrediction> ps;
  for (int i = 0; i < Q.rows(); ++i) ps.push_back(gp.predict(Q.row(i).transpose()));
  Isa now = force_isa(Isa::avx2);
  MESSAGE("isa in effect: " << isa_name(now));
  for (int i = 0; i < Q.rows(); ++i) {
    GpPrediction p = gp.predict(Q.row(i).transpose());
    CHECK(close(p.mean, ps[static_cast<std::size_t>(i)].mean, 1e-10));
    CHECK(std::abs(p.variance - ps[static_cast<std::size_t>(i)].variance) < 1e-10);
  }
  force_isa(before);
  CHECK(isa_name(Isa::scalar) == "scalar");
  CHECK(isa_name(Isa::avx2) == "avx2");
}

TEST_CASE("log_sum_exp") {
  std::vector<double> v{-1000, -1000};
  CHECK(log_sum_exp(v) == doctest::Approx(-1000 + std::log(2.0)));
  std::vector<double> ninf{-INFINITY, -INFINITY};
  CHECK(log_sum_exp(ninf) == -INFINITY);
  std::vector<double> w{0.5, 1.5, -2};
  CHECK(log_sum_exp(w) == doctest::Approx(std::log(std::exp(0.5) + std::exp(1.5) + std::exp(-2))));
}
