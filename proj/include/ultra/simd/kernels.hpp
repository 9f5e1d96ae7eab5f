#pragma once

// Dense-arithmetic inner loops behind the neural-network engine.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 variant. The table used by the rest of the library is
// chosen once at startup from CPUID; tests can pin either table explicitly.
//
// Elementwise kernels (axpy, ger_acc, gemv_t_acc, adam_update) do not use FMA
// and are bit-identical across variants. Reductions (dot, gemv) reassociate
// the sum in the vector variant and agree with the scalar reference only to
// rounding.

#include <cstddef>
#include <string_view>

namespace ultra::simd {

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[r] = bias[r] + sum_c w[r * cols + c] * x[c]
  void (*gemv)(const double* w, const double* x, const double* bias, double* y,
               std::size_t rows, std::size_t cols);

  // dx[c] += sum_r w[r * cols + c] * g[r]
  void (*gemv_t_acc)(const double* w, const double* g, double* dx, std::size_t rows,
                     std::size_t cols);

  // dw[r * cols + c] += g[r] * x[c]
  void (*ger_acc)(const double* g, const double* x, double* dw, std::size_t rows,
                  std::size_t cols);

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  void (*adam_update)(double* theta, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoefficients& c);
};

const KernelTable& scalar_kernels();

/// AVX2 table, or nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_kernels();

/// Table selected for this process.
const KernelTable& active_kernels();

/// Overrides the process-wide selection; intended for tests and benchmarks.
void set_active_kernels(const KernelTable& table);

}  // namespace ultra::simd
