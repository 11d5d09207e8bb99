#include <cmath>
#include <limits>

#include "calibr8/simd_table.hpp"

namespace calibr8::simd {
namespace {

double weighted_sq_sum(const double* a, const double* b, const double* w, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = a[i] - b[i];
    acc += w[i] * r * r;
  }
  return acc;
}

double max_standardized(const double* y, const double* mean, const double* var, std::size_t n) {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = std::abs(y[i] - mean[i]) / std::sqrt(var[i]);
    if (z > best) best = z;
  }
  return best;
}

void scaled_sq_dist(const double* const* cols, const double* query, const double* inv_ls,
                    std::size_t n, std::size_t d, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double* c = cols[k];
    const double q = query[k];
    const double s = inv_ls[k];
    for (std::size_t i = 0; i < n; ++i) {
      double t = (c[i] - q) * s;
      out[i] = out[i] + t * t;
    }
  }
}

Moments weighted_moments(const double* v, const double* w, std::size_t n) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    double wv = w[i] * v[i];
    m.sum_w += w[i];
    m.sum_wv += wv;
    m.sum_wv2 += wv * v[i];
  }
  return m;
}

double max_value(const double* v, std::size_t n) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] > best) best = v[i];
  return best;
}

constexpr KernelTable kTable{weighted_sq_sum, max_standardized, scaled_sq_dist, weighted_moments,
                             max_value};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kTable; }

}  // namespace calibr8::simd
