// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.

#include <immintrin.h>

#include "calibr8/simd_table.hpp"

namespace calibr8::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

inline __m256d abs_pd(__m256d v) {
  const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  return _mm256_and_pd(v, mask);
}

double weighted_sq_sum(const double* a, const double* b, const double* w, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d r0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    __m256d r1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), r0), r0, acc0);
    acc1 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i + 4), r1), r1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d r0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), r0), r0, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    double r = a[i] - b[i];
    acc += w[i] * r * r;
  }
  return acc;
}

double max_standardized(const double* y, const double* mean, const double* var, std::size_t n) {
  __m256d best = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = abs_pd(_mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(mean + i)));
    __m256d z = _mm256_div_pd(r, _mm256_sqrt_pd(_mm256_loadu_pd(var + i)));
    best = _mm256_max_pd(z, best);
  }
  double out = hmax(best);
  for (; i < n; ++i) {
    double r = y[i] - mean[i];
    if (r < 0) r = -r;
    __m128d z = _mm_div_sd(_mm_set_sd(r), _mm_sqrt_sd(_mm_setzero_pd(), _mm_set_sd(var[i])));
    double zs = _mm_cvtsd_f64(z);
    if (zs > out) out = zs;
  }
  return out;
}

// No FMA here: the per-element sum over dimensions runs in the same order as
// the scalar kernel and gives bit-identical distances.
void scaled_sq_dist(const double* const* cols, const double* query, const double* inv_ls,
                    std::size_t n, std::size_t d, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < d; ++k) {
      __m256d t = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(cols[k] + i), _mm256_set1_pd(query[k])),
                                _mm256_set1_pd(inv_ls[k]));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(t, t));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      double t = (cols[k][i] - query[k]) * inv_ls[k];
      acc = acc + t * t;
    }
    out[i] = acc;
  }
}

Moments weighted_moments(const double* v, const double* w, std::size_t n) {
  __m256d sw = _mm256_setzero_pd();
  __m256d swv = _mm256_setzero_pd();
  __m256d swv2 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vv = _mm256_loadu_pd(v + i);
    __m256d ww = _mm256_loadu_pd(w + i);
    __m256d wv = _mm256_mul_pd(ww, vv);
    sw = _mm256_add_pd(sw, ww);
    swv = _mm256_add_pd(swv, wv);
    swv2 = _mm256_fmadd_pd(wv, vv, swv2);
  }
  Moments m{hsum(sw), hsum(swv), hsum(swv2)};
  for (; i < n; ++i) {
    double wv = w[i] * v[i];
    m.sum_w += w[i];
    m.sum_wv += wv;
    m.sum_wv2 += wv * v[i];
  }
  return m;
}

double max_value(const double* v, std::size_t n) {
  const double ninf = -__builtin_inf();
  __m256d best = _mm256_set1_pd(ninf);
  std::size_t i = 0;
  // max_pd returns its second operand when either is NaN, so NaNs in v drop out.
  for (; i + 4 <= n; i += 4) best = _mm256_max_pd(_mm256_loadu_pd(v + i), best);
  double out = hmax(best);
  for (; i < n; ++i)
    if (v[i] > out) out = v[i];
  return out;
}

constexpr KernelTable kTable{weighted_sq_sum, max_standardized, scaled_sq_dist, weighted_moments,
                             max_value};

}  // namespace

const KernelTable* avx2_kernels() noexcept { return &kTable; }

}  // namespace calibr8::simd
