#include <atomic>

#include "ultra/simd/kernels.hpp"

namespace ultra::simd {

#if defined(ULTRA_HAVE_AVX2_TU)
const KernelTable& avx2_table_unchecked();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(ULTRA_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& detect() {
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> active{&detect()};
  return active;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(ULTRA_HAVE_AVX2_TU)
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() { return *slot().load(std::memory_order_acquire); }

void set_active_kernels(const KernelTable& table) {
  slot().store(&table, std::memory_order_release);
}

}  // namespace ultra::simd
