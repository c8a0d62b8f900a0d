#include "beamlat/kernels.hpp"

namespace beamlat::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double weighted_sq_dist_scalar(const double* x, const double* c, double scale, const double* w,
                               std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = x[i] - scale * c[i];
    acc += diff * diff * w[i];
  }
  return acc;
}

void gemv_scalar(const double* w, const double* x, const double* b, double* y, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = b[r] + dot_scalar(w + r * cols, x, cols);
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{Isa::scalar, dot_scalar, axpy_scalar, weighted_sq_dist_scalar,
                                 gemv_scalar};
  return table;
}

}  // namespace beamlat::kernels
