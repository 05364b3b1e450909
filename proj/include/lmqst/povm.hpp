#pragma once

#include <string>
#include <vector>

#include "lmqst/channel.hpp"
#include "lmqst/complex_matrix.hpp"

namespace lmqst {

/// Single-qubit informationally complete POVM: m effects plus the local
/// overlap matrix T_loc[a][a'] = Re tr(M^a M^a') and its inverse. The N-qubit
/// frame is always the tensor product of one LocalPovm per site.
struct LocalPovm {
  std::string name;
  int m = 0;
  std::vector<ComplexMatrix> effects;   // m Hermitian PSD 2x2, summing to I
  std::vector<double> t_local;          // m*m row-major
  std::vector<double> t_local_inv;      // m*m row-major
};

/// Validates the effects (Hermitian, PSD to -1e-12, complete to 1e-12) and
/// fills in t_local / t_local_inv.
LocalPovm make_povm(std::string name, std::vector<ComplexMatrix> effects);

/// Symmetric tetrahedral (SIC) POVM: M^a = (I + s_a . sigma)/4 with the four
/// Bloch vectors of a regular tetrahedron, s_0 = (0,0,1).
LocalPovm tetrahedral_povm();

/// Pauli-4 alternative: M0=(I+Z)/6, M1=(I+X)/6, M2=(I+Y)/6, M3=I-M0-M1-M2.
LocalPovm pauli4_povm();

/// Lookup by CLI name: "tetra" or "pauli4".
LocalPovm povm_by_name(const std::string& name);

/// M^{a_1} x ... x M^{a_N} as a dense 2^N matrix. Guarded at N <= 12.
ComplexMatrix joint_effect(const LocalPovm& povm, const std::vector<int>& outcome);

/// Throws invalid_argument naming the violated property if rho is not a
/// density matrix (Hermitian, trace 1, PSD) within the given tolerance.
void validate_density(const ComplexMatrix& rho, double tol = 1e-10);

/// P(a) = tr(rho M^a) over all m^N outcomes in base-m lexicographic order
/// (a_1 most significant). Mode-wise contraction, O(N m 4^N); N <= 10.
std::vector<double> probs_from_density(const LocalPovm& povm, const ComplexMatrix& rho);

struct DensityFromProbs {
  ComplexMatrix rho;
  bool normalized_input = true;  // false if probs did not sum to 1 within 1e-6
};

/// rho = sum_a q_a M^a with q = (T_loc^{-1})^{xN} P applied factor-wise;
/// the m^N x m^N overlap matrix is never materialized. N <= 10.
DensityFromProbs density_from_probs(const LocalPovm& povm, const std::vector<double>& probs,
                                    int n_qubits);

/// Folds a noise channel into the effects via tr(E(rho) M) = tr(rho E^+(M));
/// completeness survives because both channels are unital.
LocalPovm adjoint_channel_effects(const LocalPovm& povm, const NoiseChannel& channel);

}  // namespace lmqst
