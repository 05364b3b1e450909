#include "lmqst/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

// AVX2+FMA variants. This file is compiled with -mavx2 -mfma and must only be
// entered through the dispatch table after the runtime feature check.

namespace lmqst::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// 4x8 register-blocked panel: c[i0..i0+4) x [j0..j0+8) accumulated over k.
inline void panel_4x8(const double* a, const double* b, double* c,
                      std::size_t k, std::size_t n,
                      std::size_t i0, std::size_t j0) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  const double* a0 = a + (i0 + 0) * k;
  const double* a1 = a + (i0 + 1) * k;
  const double* a2 = a + (i0 + 2) * k;
  const double* a3 = a + (i0 + 3) * k;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b + kk * n + j0;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    __m256d av;
    av = _mm256_broadcast_sd(a0 + kk);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a1 + kk);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a2 + kk);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a3 + kk);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  double* c0 = c + (i0 + 0) * n + j0;
  double* c1 = c + (i0 + 1) * n + j0;
  double* c2 = c + (i0 + 2) * n + j0;
  double* c3 = c + (i0 + 3) * n + j0;
  _mm256_storeu_pd(c0, _mm256_add_pd(_mm256_loadu_pd(c0), c00));
  _mm256_storeu_pd(c0 + 4, _mm256_add_pd(_mm256_loadu_pd(c0 + 4), c01));
  _mm256_storeu_pd(c1, _mm256_add_pd(_mm256_loadu_pd(c1), c10));
  _mm256_storeu_pd(c1 + 4, _mm256_add_pd(_mm256_loadu_pd(c1 + 4), c11));
  _mm256_storeu_pd(c2, _mm256_add_pd(_mm256_loadu_pd(c2), c20));
  _mm256_storeu_pd(c2 + 4, _mm256_add_pd(_mm256_loadu_pd(c2 + 4), c21));
  _mm256_storeu_pd(c3, _mm256_add_pd(_mm256_loadu_pd(c3), c30));
  _mm256_storeu_pd(c3 + 4, _mm256_add_pd(_mm256_loadu_pd(c3 + 4), c31));
}

// Single-row edge panel over an arbitrary column range.
inline void panel_1xN(const double* a, const double* b, double* c,
                      std::size_t k, std::size_t n,
                      std::size_t i, std::size_t j0, std::size_t j1) {
  std::size_t j = j0;
  for (; j + 4 <= j1; j += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t kk = 0; kk < k; ++kk) {
      const __m256d bv = _mm256_loadu_pd(b + kk * n + j);
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + i * k + kk), bv, acc);
    }
    double* cp = c + i * n + j;
    _mm256_storeu_pd(cp, _mm256_add_pd(_mm256_loadu_pd(cp), acc));
  }
  for (; j < j1; ++j) {
    double s = 0.0;
    for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
    c[i * n + j] += s;
  }
}

void matmul_acc_avx2(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t m4 = m - m % 4;
  const std::size_t n8 = n - n % 8;
  for (std::size_t i0 = 0; i0 < m4; i0 += 4) {
    for (std::size_t j0 = 0; j0 < n8; j0 += 8) panel_4x8(a, b, c, k, n, i0, j0);
    if (n8 < n) {
      for (std::size_t r = 0; r < 4; ++r) panel_1xN(a, b, c, k, n, i0 + r, n8, n);
    }
  }
  for (std::size_t i = m4; i < m; ++i) panel_1xN(a, b, c, k, n, i, 0, n);
}

void matmul_avx2(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  matmul_acc_avx2(a, b, c, m, k, n);
}

void matmul_nt_acc_avx2(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t k4 = k - k % 4;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + (j + 0) * k;
      const double* b1 = b + (j + 1) * k;
      const double* b2 = b + (j + 2) * k;
      const double* b3 = b + (j + 3) * k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      for (std::size_t kk = 0; kk < k4; kk += 4) {
        const __m256d av = _mm256_loadu_pd(arow + kk);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + kk), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + kk), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + kk), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + kk), s3);
      }
      double d0 = hsum(s0), d1 = hsum(s1), d2 = hsum(s2), d3 = hsum(s3);
      for (std::size_t kk = k4; kk < k; ++kk) {
        d0 += arow[kk] * b0[kk];
        d1 += arow[kk] * b1[kk];
        d2 += arow[kk] * b2[kk];
        d3 += arow[kk] * b3[kk];
      }
      c[i * n + j + 0] += d0;
      c[i * n + j + 1] += d1;
      c[i * n + j + 2] += d2;
      c[i * n + j + 3] += d3;
    }
    for (; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d s = _mm256_setzero_pd();
      for (std::size_t kk = 0; kk < k4; kk += 4)
        s = _mm256_fmadd_pd(_mm256_loadu_pd(arow + kk), _mm256_loadu_pd(brow + kk), s);
      double d = hsum(s);
      for (std::size_t kk = k4; kk < k; ++kk) d += arow[kk] * brow[kk];
      c[i * n + j] += d;
    }
  }
}

void matmul_tn_acc_avx2(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      const __m256d avv = _mm256_set1_pd(av);
      std::size_t j = 0;
      for (; j < n4; j += 4) {
        const __m256d cv = _mm256_loadu_pd(crow + j);
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), cv));
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx2(double s, const double* x, double* y, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += s * x[i];
}

void relu_avx2(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* x, const double* g, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    const __m256d gv = _mm256_and_pd(_mm256_loadu_pd(g + i), mask);
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), gv));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += g[i];
  }
}

double reduce_sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double reduce_max_avx2(const double* x, std::size_t n) {
  if (n < 8) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
  }
  __m256d acc = _mm256_loadu_pd(x);
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  lo = _mm_max_pd(lo, hi);
  double m = std::max(_mm_cvtsd_f64(lo), _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void adam_update_avx2(double* param, const double* grad, double* m, double* v,
                      double beta1, double beta2, double lr, double corr1,
                      double corr2, double eps, std::size_t n) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d c1 = _mm256_set1_pd(corr1);
  const __m256d c2 = _mm256_set1_pd(corr2);
  const __m256d ev = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(b1, mv, _mm256_mul_pd(b1c, g));
    vv = _mm256_fmadd_pd(b2, vv, _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, c1);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, c2)), ev);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    param[i] -= lr * (m[i] * corr1) / (std::sqrt(v[i] * corr2) + eps);
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels table = {
      "avx2",
      matmul_avx2,
      matmul_acc_avx2,
      matmul_nt_acc_avx2,
      matmul_tn_acc_avx2,
      add_avx2,
      mul_avx2,
      scale_avx2,
      axpy_avx2,
      relu_avx2,
      relu_backward_avx2,
      reduce_sum_avx2,
      reduce_max_avx2,
      dot_avx2,
      adam_update_avx2,
  };
  return table;
}

}  // namespace lmqst::kernels
