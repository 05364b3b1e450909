#pragma once

#include <cstddef>
#include <string>

namespace lmqst::kernels {

// Dense double-precision kernels used by the tensor layer. Every entry has a
// scalar reference implementation; on x86-64 an AVX2+FMA variant is selected
// at runtime after a cpuid check. Matrices are row-major and fully packed.
struct Kernels {
  const char* name;

  // c = a(m x k) * b(k x n)
  void (*matmul)(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n);
  // c += a(m x k) * b(k x n)
  void (*matmul_acc)(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n);
  // c(m x n) += a(m x k) * b(n x k)^T
  void (*matmul_nt_acc)(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);
  // c(m x n) += a(k x m)^T * b(k x n)
  void (*matmul_tn_acc)(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);

  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y += s * x
  void (*axpy)(double s, const double* x, double* y, std::size_t n);
  // out = max(x, 0)
  void (*relu)(const double* x, double* out, std::size_t n);
  // gx += g where x > 0
  void (*relu_backward)(const double* x, const double* g, double* gx, std::size_t n);

  double (*reduce_sum)(const double* x, std::size_t n);
  double (*reduce_max)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);

  // Adam moment update followed by the bias-corrected parameter step:
  //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
  //   p -= lr * (m*corr1) / (sqrt(v*corr2) + eps)
  // with corr1 = 1/(1-b1^t), corr2 = 1/(1-b2^t) supplied by the caller.
  void (*adam_update)(double* param, const double* grad, double* m, double* v,
                      double beta1, double beta2, double lr, double corr1,
                      double corr2, double eps, std::size_t n);
};

const Kernels& scalar_kernels();
bool avx2_available();
const Kernels& avx2_kernels();  // valid only when avx2_available()

enum class SimdMode { Auto, Scalar, Avx2 };

/// Selects the dispatch table. Defaults to Auto; the LMQST_SIMD environment
/// variable ("auto" | "scalar" | "avx2") overrides at startup.
void set_simd_mode(SimdMode mode);
SimdMode simd_mode();

const Kernels& active();

}  // namespace lmqst::kernels
