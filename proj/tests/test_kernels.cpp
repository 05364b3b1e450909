#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lmqst/kernels.hpp"

using lmqst::kernels::Kernels;

namespace {

std::mt19937_64 rng(12345);

std::vector<double> randv(std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Naive references, written independently of the library loops.
void ref_matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
}

void ref_matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[j * k + p];
}

void ref_matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[p * m + i] * b[p * n + j];
}

void expect_close(const std::vector<double>& got, const std::vector<double>& want,
                  double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max({1.0, std::abs(got[i]), std::abs(want[i])});
    CHECK(std::abs(got[i] - want[i]) / denom <= tol);
  }
}

const std::size_t kDims[] = {1, 2, 3, 5, 7, 8, 9, 16, 17, 33};

void run_matmul_suite(const Kernels& K) {
  for (std::size_t m : kDims)
    for (std::size_t k : {std::size_t(1), std::size_t(4), std::size_t(7), std::size_t(19)})
      for (std::size_t n : kDims) {
        auto a = randv(m * k), b = randv(k * n), bt = randv(n * k), at = randv(k * m);
        auto c0 = randv(m * n);

        std::vector<double> got(m * n, 0.0), want(m * n, 0.0);
        K.matmul(a.data(), b.data(), got.data(), m, k, n);
        ref_matmul_acc(a.data(), b.data(), want.data(), m, k, n);
        expect_close(got, want);

        got = c0;
        want = c0;
        K.matmul_acc(a.data(), b.data(), got.data(), m, k, n);
        ref_matmul_acc(a.data(), b.data(), want.data(), m, k, n);
        expect_close(got, want);

        got = c0;
        want = c0;
        K.matmul_nt_acc(a.data(), bt.data(), got.data(), m, k, n);
        ref_matmul_nt_acc(a.data(), bt.data(), want.data(), m, k, n);
        expect_close(got, want);

        got = c0;
        want = c0;
        K.matmul_tn_acc(at.data(), b.data(), got.data(), m, k, n);
        ref_matmul_tn_acc(at.data(), b.data(), want.data(), m, k, n);
        expect_close(got, want);
      }
}

void run_elementwise_suite(const Kernels& K) {
  for (std::size_t n : {std::size_t(1), std::size_t(3), std::size_t(8), std::size_t(17),
                        std::size_t(64), std::size_t(1001)}) {
    auto a = randv(n), b = randv(n);

    std::vector<double> out(n);
    K.add(a.data(), b.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-15));

    K.mul(a.data(), b.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(a[i] * b[i]).epsilon(1e-15));

    K.scale(a.data(), 2.5, out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-15));

    std::vector<double> y = b;
    K.axpy(-1.75, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(y[i] == doctest::Approx(b[i] - 1.75 * a[i]).epsilon(1e-14));

    K.relu(a.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == (a[i] > 0.0 ? a[i] : 0.0));

    std::vector<double> gx(n, 0.5);
    K.relu_backward(a.data(), b.data(), gx.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(gx[i] == doctest::Approx(0.5 + (a[i] > 0.0 ? b[i] : 0.0)).epsilon(1e-14));

    double s = 0.0, mx = a[0], dp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += a[i];
      mx = std::max(mx, a[i]);
      dp += a[i] * b[i];
    }
    CHECK(K.reduce_sum(a.data(), n) == doctest::Approx(s).epsilon(1e-12));
    CHECK(K.reduce_max(a.data(), n) == mx);
    CHECK(K.dot(a.data(), b.data(), n) == doctest::Approx(dp).epsilon(1e-12));
  }
}

void run_adam_suite(const Kernels& K) {
  const double b1 = 0.9, b2 = 0.999, lr = 1e-3, eps = 1e-8;
  const std::size_t n = 37;
  auto p0 = randv(n), g = randv(n);
  std::vector<double> p = p0, m(n, 0.0), v(n, 0.0);
  const double corr1 = 1.0 / (1.0 - b1), corr2 = 1.0 / (1.0 - b2);
  K.adam_update(p.data(), g.data(), m.data(), v.data(), b1, b2, lr, corr1, corr2, eps, n);
  for (std::size_t i = 0; i < n; ++i) {
    // First step from zero moments: mhat = g, vhat = g^2.
    const double want = p0[i] - lr * g[i] / (std::abs(g[i]) + eps);
    CHECK(p[i] == doctest::Approx(want).epsilon(1e-12));
    CHECK(m[i] == doctest::Approx((1.0 - b1) * g[i]).epsilon(1e-12));
    CHECK(v[i] == doctest::Approx((1.0 - b2) * g[i] * g[i]).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("scalar matmul variants match naive reference") {
  run_matmul_suite(lmqst::kernels::scalar_kernels());
}

TEST_CASE("scalar elementwise kernels match naive reference") {
  run_elementwise_suite(lmqst::kernels::scalar_kernels());
}

TEST_CASE("scalar adam first step matches closed form") {
  run_adam_suite(lmqst::kernels::scalar_kernels());
}

TEST_CASE("matmul spot check against hand-computed values") {
  const auto& K = lmqst::kernels::active();
  // [[1,2,3],[4,5,6]] * [[7,8],[9,10],[11,12]] = [[58,64],[139,154]]
  const double a[6] = {1, 2, 3, 4, 5, 6};
  const double b[6] = {7, 8, 9, 10, 11, 12};
  double c[4];
  K.matmul(a, b, c, 2, 3, 2);
  CHECK(c[0] == 58.0);
  CHECK(c[1] == 64.0);
  CHECK(c[2] == 139.0);
  CHECK(c[3] == 154.0);
}

TEST_CASE("avx2 matmul variants match naive reference") {
  if (!lmqst::kernels::avx2_available()) return;
  run_matmul_suite(lmqst::kernels::avx2_kernels());
}

TEST_CASE("avx2 elementwise kernels match naive reference") {
  if (!lmqst::kernels::avx2_available()) return;
  run_elementwise_suite(lmqst::kernels::avx2_kernels());
}

TEST_CASE("avx2 adam first step matches closed form") {
  if (!lmqst::kernels::avx2_available()) return;
  run_adam_suite(lmqst::kernels::avx2_kernels());
}

TEST_CASE("avx2 and scalar agree on random inputs") {
  if (!lmqst::kernels::avx2_available()) return;
  const auto& S = lmqst::kernels::scalar_kernels();
  const auto& A = lmqst::kernels::avx2_kernels();
  for (int trial = 0; trial < 25; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 40);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = randv(m * k), b = randv(k * n), bt = randv(n * k), at = randv(k * m);

    std::vector<double> cs(m * n, 0.25), ca(m * n, 0.25);
    S.matmul_acc(a.data(), b.data(), cs.data(), m, k, n);
    A.matmul_acc(a.data(), b.data(), ca.data(), m, k, n);
    expect_close(ca, cs, 1e-13);

    std::fill(cs.begin(), cs.end(), -0.5);
    std::fill(ca.begin(), ca.end(), -0.5);
    S.matmul_nt_acc(a.data(), bt.data(), cs.data(), m, k, n);
    A.matmul_nt_acc(a.data(), bt.data(), ca.data(), m, k, n);
    expect_close(ca, cs, 1e-13);

    std::fill(cs.begin(), cs.end(), 1.0);
    std::fill(ca.begin(), ca.end(), 1.0);
    S.matmul_tn_acc(at.data(), b.data(), cs.data(), m, k, n);
    A.matmul_tn_acc(at.data(), b.data(), ca.data(), m, k, n);
    expect_close(ca, cs, 1e-13);

    const std::size_t len = m * k;
    std::vector<double> os(len), oa(len);
    S.relu(a.data(), os.data(), len);
    A.relu(a.data(), oa.data(), len);
    expect_close(oa, os, 0.0);

    CHECK(S.reduce_max(a.data(), len) == A.reduce_max(a.data(), len));
    CHECK(S.reduce_sum(a.data(), len) ==
          doctest::Approx(A.reduce_sum(a.data(), len)).epsilon(1e-13));
    CHECK(S.dot(a.data(), a.data(), len) ==
          doctest::Approx(A.dot(a.data(), a.data(), len)).epsilon(1e-13));
  }
}

TEST_CASE("simd mode override") {
  using namespace lmqst::kernels;
  const SimdMode saved = simd_mode();
  set_simd_mode(SimdMode::Scalar);
  CHECK(std::string(active().name) == "scalar");
  if (avx2_available()) {
    set_simd_mode(SimdMode::Avx2);
    CHECK(std::string(active().name) == "avx2");
  }
  set_simd_mode(saved);
}
