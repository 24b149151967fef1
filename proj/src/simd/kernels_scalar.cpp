#include "roughmal/simd.hpp"

namespace roughmal::simd {
namespace {

// Four interleaved partial sums, the same association the AVX2 lanes use.
double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    for (int l = 0; l < 4; ++l) s[l] += a[k + l] * b[k + l];
  }
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; k < n; ++k) total += a[k] * b[k];
  return total;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

double sum_squares_scalar(const double* a, std::size_t n) { return dot_scalar(a, a, n); }

std::size_t max_plus_scalar(const double* base, const double* cost, std::size_t n, double* best) {
  std::size_t arg = 0;
  double v = -1.0 / 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double c = base[k] + cost[k];
    if (c > v) {
      v = c;
      arg = k;
    }
  }
  *best = v;
  return arg;
}

const KernelTable kScalar{"scalar", dot_scalar, axpy_scalar, sum_squares_scalar, max_plus_scalar};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace roughmal::simd
