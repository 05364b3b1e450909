#pragma once

#include <cstdint>
#include <random>

namespace lmqst {

/// Derives an independent 64-bit stream seed from (seed, index) pairs so that
/// per-sample generators are reproducible regardless of evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) : engine_(mix_seed(seed, stream)) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return std::generate_canonical<double, 53>(engine_);
  }

  double normal(double stddev) {
    return std::normal_distribution<double>(0.0, stddev)(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }

  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lmqst
