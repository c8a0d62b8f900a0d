#pragma once

// Dense double-precision kernels used by the denoisers, the scorer and the
// metric embeddings. Every kernel has a scalar reference implementation and
// optional AVX2 (x86-64) / NEON (AArch64) variants. The variant is chosen once
// at startup from the CPU features, or forced through BEAMLAT_KERNELS=scalar.
//
// SIMD variants reduce in a different order than the scalar loop, so results
// agree to rounding, not bitwise. Within one process the table never changes,
// which keeps runs bit-reproducible on a given machine.

#include <cstddef>
#include <span>
#include <string_view>

namespace beamlat::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (x[i] - scale * c[i])^2 * w[i]
  double (*weighted_sq_dist)(const double* x, const double* c, double scale, const double* w,
                             std::size_t n);
  // y = W x + b, W row-major rows x cols
  void (*gemv)(const double* w, const double* x, const double* b, double* y, std::size_t rows,
               std::size_t cols);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the ISA was not compiled in or the CPU lacks it.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

// The process-wide table. Resolved on first call.
const KernelTable& active() noexcept;

// Overrides the active table; returns false if `isa` is unavailable here.
bool select(Isa isa) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double weighted_sq_dist(std::span<const double> x, std::span<const double> c, double scale,
                               std::span<const double> w) {
  return active().weighted_sq_dist(x.data(), c.data(), scale, w.data(), x.size());
}

inline void gemv(std::span<const double> w, std::span<const double> x, std::span<const double> b,
                 std::span<double> y) {
  active().gemv(w.data(), x.data(), b.data(), y.data(), y.size(), x.size());
}

double norm(std::span<const double> a);

// 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace beamlat::kernels
