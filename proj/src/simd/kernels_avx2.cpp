#include <immintrin.h>

#include <limits>

#include "roughmal/simd.hpp"

namespace roughmal::simd {
namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k)));
  }
  alignas(32) double s[4];
  _mm256_store_pd(s, acc);
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; k < n; ++k) total += a[k] * b[k];
  return total;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d vy = _mm256_loadu_pd(y + k);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + k)));
    _mm256_storeu_pd(y + k, vy);
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

double sum_squares_avx2(const double* a, std::size_t n) { return dot_avx2(a, a, n); }

std::size_t max_plus_avx2(const double* base, const double* cost, std::size_t n, double* best) {
  const double ninf = -std::numeric_limits<double>::infinity();
  __m256d vbest = _mm256_set1_pd(ninf);
  __m256d vidx = _mm256_set1_pd(0.0);
  __m256d cur = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d four = _mm256_set1_pd(4.0);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d c = _mm256_add_pd(_mm256_loadu_pd(base + k), _mm256_loadu_pd(cost + k));
    // strict > keeps the earliest index within each lane
    const __m256d gt = _mm256_cmp_pd(c, vbest, _CMP_GT_OQ);
    vbest = _mm256_blendv_pd(vbest, c, gt);
    vidx = _mm256_blendv_pd(vidx, cur, gt);
    cur = _mm256_add_pd(cur, four);
  }
  alignas(32) double lb[4];
  alignas(32) double li[4];
  _mm256_store_pd(lb, vbest);
  _mm256_store_pd(li, vidx);
  double v = ninf;
  std::size_t arg = 0;
  bool found = false;
  for (int l = 0; l < 4; ++l) {
    if (lb[l] == ninf) continue;
    const auto idx = static_cast<std::size_t>(li[l]);
    if (!found || lb[l] > v || (lb[l] == v && idx < arg)) {
      v = lb[l];
      arg = idx;
      found = true;
    }
  }
  for (; k < n; ++k) {
    const double c = base[k] + cost[k];
    if (c > v) {
      v = c;
      arg = k;
    }
  }
  *best = v;
  return arg;
}

const KernelTable kAvx2{"avx2", dot_avx2, axpy_avx2, sum_squares_avx2, max_plus_avx2};

}  // namespace

const KernelTable* avx2_table_impl() { return &kAvx2; }

}  // namespace roughmal::simd
