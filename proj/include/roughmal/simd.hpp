#pragma once

#include <cstddef>

// Hot inner loops with a scalar reference implementation and an AVX2 variant.
// The active table is chosen once at first use; ROUGHMAL_SIMD=scalar forces
// the reference path.
namespace roughmal::simd {

struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // max_k (base[k] + cost[k]); ties resolved to the smallest k. Returns k, writes the value.
  std::size_t (*max_plus)(const double* base, const double* cost, std::size_t n, double* best);
};

const KernelTable& scalar_kernels();
// nullptr when the build or the CPU lacks AVX2.
const KernelTable* avx2_kernels();
const KernelTable& active_kernels();

inline double dot(const double* a, const double* b, std::size_t n) {
  return active_kernels().dot(a, b, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active_kernels().axpy(a, x, y, n);
}
inline double sum_squares(const double* a, std::size_t n) {
  return active_kernels().sum_squares(a, n);
}
inline std::size_t max_plus(const double* base, const double* cost, std::size_t n, double* best) {
  return active_kernels().max_plus(base, cost, n, best);
}

}  // namespace roughmal::simd
