#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>

#include "calibr8/simd.hpp"

namespace calibr8::simd {

#ifndef CALIBR8_HAVE_AVX2_TU
const KernelTable* avx2_kernels() noexcept { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) && defined(CALIBR8_HAVE_AVX2_TU)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() noexcept {
  if (const char* env = std::getenv("CALIBR8_SIMD"); env && std::strcmp(env, "scalar") == 0)
    return Isa::scalar;
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) noexcept { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

Isa force_isa(Isa isa) noexcept {
  if (isa_available(isa)) current().store(isa);
  return active_isa();
}

const KernelTable& kernels() noexcept {
  return active_isa() == Isa::avx2 ? *avx2_kernels() : scalar_kernels();
}

double log_sum_exp(std::span<const double> v) {
  double m = max_value(v);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace calibr8::simd
