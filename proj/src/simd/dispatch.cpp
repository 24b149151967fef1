#include <cstdlib>
#include <cstring>

#include "roughmal/simd.hpp"

namespace roughmal::simd {

#ifdef ROUGHMAL_WITH_AVX2
const KernelTable* avx2_table_impl();
#endif

const KernelTable* avx2_kernels() {
#ifdef ROUGHMAL_WITH_AVX2
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok ? avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable* table = [] {
    const char* env = std::getenv("ROUGHMAL_SIMD");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
    const KernelTable* fast = avx2_kernels();
    return fast != nullptr ? fast : &scalar_kernels();
  }();
  return *table;
}

}  // namespace roughmal::simd
