// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include <immintrin.h>

#include <cmath>

#include "ultra/simd/kernels.hpp"

namespace ultra::simd {

const KernelTable& avx2_table_unchecked();

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemv(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
          std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot(w + r * cols, x, cols);
}

// y += a * x without contraction so results match the scalar kernel bit for bit
inline void axpy_nofma(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(x + i), va);
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += x[i] * a;
}

void gemv_t_acc(const double* w, const double* g, double* dx, std::size_t rows,
                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_nofma(g[r], w + r * cols, dx, cols);
}

void ger_acc(const double* g, const double* x, double* dw, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_nofma(g[r], x, dw + r * cols, cols);
}

void axpy(double a, const double* x, double* y, std::size_t n) { axpy_nofma(a, x, y, n); }

void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(omb1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, bc1);
    const __m256d v_hat = _mm256_div_pd(vi, bc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(theta + i, _mm256_sub_pd(_mm256_loadu_pd(theta + i), step));
  }
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (; i < n; ++i) {
    const double gi = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * gi;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (gi * gi);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2", dot, gemv, gemv_t_acc, ger_acc, axpy, adam_update};
  return table;
}

}  // namespace ultra::simd
