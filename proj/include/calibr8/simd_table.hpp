#pragma once

// Kernel dispatch table. Kept free of standard-library templates because it is
// included by the translation unit compiled with -mavx2.

#include <cstddef>

namespace calibr8::simd {

struct Moments {
  double sum_w = 0.0;
  double sum_wv = 0.0;
  double sum_wv2 = 0.0;
};

struct KernelTable {
  double (*weighted_sq_sum)(const double* a, const double* b, const double* w, std::size_t n);
  double (*max_standardized)(const double* y, const double* mean, const double* var, std::size_t n);
  void (*scaled_sq_dist)(const double* const* cols, const double* query, const double* inv_ls,
                         std::size_t n, std::size_t d, double* out);
  Moments (*weighted_moments)(const double* v, const double* w, std::size_t n);
  double (*max_value)(const double* v, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
const KernelTable* avx2_kernels() noexcept;  // nullptr when not compiled in

}  // namespace calibr8::simd
