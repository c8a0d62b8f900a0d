#include "beamlat/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define BEAMLAT_HAVE_AVX2 1
#define BEAMLAT_AVX2 __attribute__((target("avx2,fma")))
#endif

namespace beamlat::kernels {

#if BEAMLAT_HAVE_AVX2
namespace {

BEAMLAT_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

BEAMLAT_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

BEAMLAT_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

BEAMLAT_AVX2 double weighted_sq_dist_avx2(const double* x, const double* c, double scale,
                                          const double* w, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d diff = _mm256_fnmadd_pd(vs, _mm256_loadu_pd(c + i), _mm256_loadu_pd(x + i));
    acc = _mm256_fmadd_pd(_mm256_mul_pd(diff, diff), _mm256_loadu_pd(w + i), acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    const double diff = x[i] - scale * c[i];
    total += diff * diff * w[i];
  }
  return total;
}

BEAMLAT_AVX2 void gemv_avx2(const double* w, const double* x, const double* b, double* y,
                            std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = b[r] + dot_avx2(w + r * cols, x, cols);
}

}  // namespace

const KernelTable* avx2_table() noexcept {
  static const KernelTable table{Isa::avx2, dot_avx2, axpy_avx2, weighted_sq_dist_avx2, gemv_avx2};
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_table() noexcept { return nullptr; }

#endif

}  // namespace beamlat::kernels
