#include "ultra/simd/kernels.hpp"

#include <cmath>

namespace ultra::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemv(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
          std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot(w + r * cols, x, cols);
}

void gemv_t_acc(const double* w, const double* g, double* dx, std::size_t rows,
                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) dx[c] += row[c] * gr;
  }
}

void ger_acc(const double* g, const double* x, double* dw, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = dw + r * cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", dot, gemv, gemv_t_acc, ger_acc, axpy, adam_update};
  return table;
}

}  // namespace ultra::simd
