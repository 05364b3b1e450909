#pragma once

#include <string>

#include "lmqst/complex_matrix.hpp"

namespace lmqst {

/// Single-qubit noise channel, applied independently to every qubit.
/// depolarize: rho -> (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)
/// bitflip:    rho -> (1-p) rho + p X rho X
struct NoiseChannel {
  enum class Kind { None, Depolarize, Bitflip };
  Kind kind = Kind::None;
  double strength = 0.0;

  bool is_identity() const { return kind == Kind::None || strength == 0.0; }
  std::string to_string() const;
};

NoiseChannel make_channel(NoiseChannel::Kind kind, double strength);

/// Parses "none", "depolarize:P" or "bitflip:P".
NoiseChannel parse_channel(const std::string& text);

/// The channel applied to a single 2x2 operator. Both channels here are
/// self-adjoint (Hermitian Kraus operators), so this doubles as the adjoint
/// map used to fold noise into POVM effects.
ComplexMatrix apply_channel_2x2(const NoiseChannel& ch, const ComplexMatrix& op);

const ComplexMatrix& pauli_x();
const ComplexMatrix& pauli_y();
const ComplexMatrix& pauli_z();

}  // namespace lmqst
