#pragma once

// Data-parallel inner kernels with a scalar reference implementation and an
// AVX2/FMA variant chosen once at runtime. Set CALIBR8_SIMD=scalar in the
// environment to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

#include "calibr8/simd_table.hpp"

namespace calibr8::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;
Isa active_isa() noexcept;
/// Overrides the dispatch target (tests, benchmarking). Ignored when the
/// requested ISA is unavailable; returns the ISA actually in effect.
Isa force_isa(Isa isa) noexcept;

const KernelTable& kernels() noexcept;

/// sum_i w_i (a_i - b_i)^2
inline double weighted_sq_sum(std::span<const double> a, std::span<const double> b,
                              std::span<const double> w) {
  return kernels().weighted_sq_sum(a.data(), b.data(), w.data(), a.size());
}

/// max_i |y_i - mean_i| / sqrt(var_i); all var_i must be > 0.
inline double max_standardized(std::span<const double> y, std::span<const double> mean,
                               std::span<const double> var) {
  return kernels().max_standardized(y.data(), mean.data(), var.data(), y.size());
}

/// out_i = sum_k ((cols[k][i] - query[k]) * inv_ls[k])^2 for i < n.
inline void scaled_sq_dist(const double* const* cols, const double* query, const double* inv_ls,
                           std::size_t n, std::size_t d, double* out) {
  kernels().scaled_sq_dist(cols, query, inv_ls, n, d, out);
}

inline Moments weighted_moments(std::span<const double> v, std::span<const double> w) {
  return kernels().weighted_moments(v.data(), w.data(), v.size());
}

/// Maximum; -inf for empty input. NaN entries are ignored.
inline double max_value(std::span<const double> v) { return kernels().max_value(v.data(), v.size()); }

/// log(sum_i exp(v_i)), stabilized by the maximum.
double log_sum_exp(std::span<const double> v);

}  // namespace calibr8::simd
