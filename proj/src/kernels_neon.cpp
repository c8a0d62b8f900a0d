#include "beamlat/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace beamlat::kernels {

#if defined(__aarch64__)
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double weighted_sq_dist_neon(const double* x, const double* c, double scale, const double* w,
                             std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(scale);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t diff = vfmsq_f64(vld1q_f64(x + i), vs, vld1q_f64(c + i));
    acc = vfmaq_f64(acc, vmulq_f64(diff, diff), vld1q_f64(w + i));
  }
  double total = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double diff = x[i] - scale * c[i];
    total += diff * diff * w[i];
  }
  return total;
}

void gemv_neon(const double* w, const double* x, const double* b, double* y, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = b[r] + dot_neon(w + r * cols, x, cols);
}

}  // namespace

const KernelTable* neon_table() noexcept {
  static const KernelTable table{Isa::neon, dot_neon, axpy_neon, weighted_sq_dist_neon, gemv_neon};
  return &table;
}

#else

const KernelTable* neon_table() noexcept { return nullptr; }

#endif

}  // namespace beamlat::kernels
