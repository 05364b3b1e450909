#include "lmqst/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace lmqst::kernels {
namespace {

SimdMode g_mode = SimdMode::Auto;
std::atomic<const Kernels*> g_active{nullptr};

SimdMode mode_from_env() {
  const char* env = std::getenv("LMQST_SIMD");
  if (env == nullptr || std::strcmp(env, "auto") == 0) return SimdMode::Auto;
  if (std::strcmp(env, "scalar") == 0) return SimdMode::Scalar;
  if (std::strcmp(env, "avx2") == 0) return SimdMode::Avx2;
  throw std::runtime_error(std::string("LMQST_SIMD: unknown mode '") + env + "'");
}

const Kernels* resolve(SimdMode mode) {
  switch (mode) {
    case SimdMode::Scalar:
      return &scalar_kernels();
    case SimdMode::Avx2:
      if (!avx2_available()) throw std::runtime_error("AVX2 kernels requested but unavailable");
      return &avx2_kernels();
    case SimdMode::Auto:
      return avx2_available() ? &avx2_kernels() : &scalar_kernels();
  }
  return &scalar_kernels();
}

}  // namespace

bool avx2_available() {
#if defined(LMQST_BUILD_AVX2) && (defined(__x86_64__) || defined(_M_X64))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

#if !defined(LMQST_BUILD_AVX2)
const Kernels& avx2_kernels() {
  throw std::runtime_error("AVX2 kernels not built for this target");
}
#endif

void set_simd_mode(SimdMode mode) {
  g_mode = mode;
  g_active.store(resolve(mode), std::memory_order_release);
}

SimdMode simd_mode() { return g_mode; }

const Kernels& active() {
  const Kernels* k = g_active.load(std::memory_order_acquire);
  if (k == nullptr) {
    g_mode = mode_from_env();
    k = resolve(g_mode);
    g_active.store(k, std::memory_order_release);
  }
  return *k;
}

}  // namespace lmqst::kernels
