#pragma once

#include <cstdint>
#include <vector>

#include "lmqst/channel.hpp"
#include "lmqst/complex_matrix.hpp"
#include "lmqst/povm.hpp"
#include "lmqst/rng.hpp"

namespace lmqst {

/// Dense density-matrix state for small systems (N <= 12). Qubit 1 owns the
/// most significant bit of the computational-basis index.
struct DenseState {
  int n_qubits = 0;
  ComplexMatrix rho;
};

DenseState ghz_dense(int n);
DenseState w_dense(int n);

/// Computational-basis state vectors of the same states (for pure-state fast
/// paths; index convention as above).
std::vector<cplx> ghz_vector(int n);
std::vector<cplx> w_vector(int n);

/// Ground state of H = sum Z_i Z_{i+1} + field * sum X_i on an open chain,
/// via dense diagonalization. 2 <= n <= 12; degenerate ground spaces resolve
/// to the solver's first ascending eigenvector. Returns the state and energy.
struct GroundState {
  DenseState state;
  std::vector<cplx> vector;
  double energy = 0.0;
};
GroundState tfic_ground_state(int n, double field_strength = 1.0);

/// Noise channel applied independently to every qubit of a dense state.
DenseState apply_channel_dense(const DenseState& state, const NoiseChannel& channel);

/// Matrix product state with site tensors indexed [left][phys][right],
/// stored row-major as left*2*right. Physical dimension fixed at 2.
struct Mps {
  int n_qubits = 0;
  std::vector<std::vector<cplx>> sites;
  std::vector<int> left_dims, right_dims;

  double norm() const;  // <psi|psi>, transfer-matrix contraction
};

Mps ghz_mps(int n);
Mps w_mps(int n);

/// Dense state vector from an MPS (n <= 12 guard), for cross-checks.
std::vector<cplx> mps_to_vector(const Mps& mps);

/// <psi| M^{a_1} x ... x M^{a_N} |psi> by left-to-right transfer contraction.
double mps_outcome_prob(const Mps& mps, const LocalPovm& povm, const std::vector<int>& outcome);

/// Per-state sampling context: right environments are contracted once
/// (summing effects over each site, valid because every LocalPovm is
/// complete) and reused across draws.
class MpsSampler {
 public:
  MpsSampler(Mps mps, LocalPovm povm);
  std::vector<int> sample(RngStream& rng) const;
  const Mps& mps() const { return mps_; }
  const LocalPovm& povm() const { return povm_; }

 private:
  Mps mps_;
  LocalPovm povm_;
  // right_env_[i]: contraction of sites i..N-1 with identity insertions,
  // a (right_dims mirrored) bond-space matrix per cut.
  std::vector<std::vector<cplx>> right_env_;
};

}  // namespace lmqst
