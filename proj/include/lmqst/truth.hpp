#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "lmqst/channel.hpp"
#include "lmqst/povm.hpp"
#include "lmqst/quantum.hpp"
#include "lmqst/rng.hpp"

namespace lmqst {

/// Which physical state the measurement data comes from.
struct StateSpec {
  enum class Family { Ghz, W, Tfic };
  Family family = Family::Ghz;
  int n_qubits = 2;
  double field_strength = 1.0;  // tfic only
  NoiseChannel channel;

  static Family parse_family(const std::string& name);
  std::string family_name() const;
  std::string to_string() const;  // e.g. "ghz n=4 noise=depolarize:0.1"
};

/// Exact measurement-outcome distribution P(a) = tr(rho M^a) of a StateSpec,
/// with one uniform interface for probabilities, sampling and enumeration.
/// Noise is always folded into the effects through the adjoint channel, so
/// the state itself stays pure: GHZ/W run on bond-dimension-2 MPS at any N,
/// the Ising ground state runs on a dense 2^N vector (N <= 12).
class TruthModel {
 public:
  TruthModel(const StateSpec& spec, const LocalPovm& base_povm);

  int n_qubits() const { return spec_.n_qubits; }
  const StateSpec& spec() const { return spec_; }
  /// Effects with the noise channel folded in (equals the base POVM at p=0).
  const LocalPovm& effective_povm() const { return povm_; }

  double prob(const std::vector<int>& outcome) const;
  std::vector<int> sample(RngStream& rng) const;
  /// All m^N probabilities in base-m lexicographic order; N <= 10.
  std::vector<double> enumerate_probs() const;

 private:
  StateSpec spec_;
  LocalPovm povm_;
  std::unique_ptr<MpsSampler> mps_;  // GHZ / W route
  std::vector<cplx> psi_;            // TFIC dense route
  // Rank factors of each effect, M^a = sum_k v_k v_k^dagger, for exact
  // chain-rule sampling on the dense pure state.
  std::vector<std::vector<std::array<cplx, 2>>> kraus_;

  std::vector<int> sample_dense(RngStream& rng) const;
};

}  // namespace lmqst
