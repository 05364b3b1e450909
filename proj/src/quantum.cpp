#include "lmqst/quantum.hpp"

#include <cmath>
#include <stdexcept>

namespace lmqst {

// --- Pauli matrices and channels ---------------------------------------------

const ComplexMatrix& pauli_x() {
  static const ComplexMatrix x = [] {
    ComplexMatrix m(2, 2);
    m(0, 1) = 1.0;
    m(1, 0) = 1.0;
    return m;
  }();
  return x;
}

const ComplexMatrix& pauli_y() {
  static const ComplexMatrix y = [] {
    ComplexMatrix m(2, 2);
    m(0, 1) = cplx(0.0, -1.0);
    m(1, 0) = cplx(0.0, 1.0);
    return m;
  }();
  return y;
}

const ComplexMatrix& pauli_z() {
  static const ComplexMatrix z = [] {
    ComplexMatrix m(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    return m;
  }();
  return z;
}

std::string NoiseChannel::to_string() const {
  switch (kind) {
    case Kind::None:
      return "none";
    case Kind::Depolarize:
      return "depolarize:" + std::to_string(strength);
    case Kind::Bitflip:
      return "bitflip:" + std::to_string(strength);
  }
  return "none";
}

NoiseChannel make_channel(NoiseChannel::Kind kind, double strength) {
  if (kind != NoiseChannel::Kind::None && (strength < 0.0 || strength > 1.0))
    throw std::invalid_argument("noise strength must be in [0,1]");
  NoiseChannel ch;
  ch.kind = kind;
  ch.strength = kind == NoiseChannel::Kind::None ? 0.0 : strength;
  return ch;
}

NoiseChannel parse_channel(const std::string& text) {
  if (text.empty() || text == "none") return NoiseChannel{};
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  double p = 0.0;
  if (colon != std::string::npos) {
    try {
      p = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse noise strength in '" + text + "'");
    }
  }
  if (name == "depolarize") return make_channel(NoiseChannel::Kind::Depolarize, p);
  if (name == "bitflip") return make_channel(NoiseChannel::Kind::Bitflip, p);
  throw std::invalid_argument("unknown noise channel '" + name +
                              "' (expected none, depolarize:P or bitflip:P)");
}

ComplexMatrix apply_channel_2x2(const NoiseChannel& ch, const ComplexMatrix& op) {
  if (op.rows() != 2 || op.cols() != 2)
    throw std::invalid_argument("apply_channel_2x2: operator must be 2x2");
  if (ch.is_identity()) return op;
  const double p = ch.strength;
  ComplexMatrix out = op;
  if (ch.kind == NoiseChannel::Kind::Depolarize) {
    out *= (1.0 - p);
    for (const ComplexMatrix* s : {&pauli_x(), &pauli_y(), &pauli_z()}) {
      ComplexMatrix t = (*s) * op * (*s);
      t *= p / 3.0;
      out += t;
    }
  } else {
    out *= (1.0 - p);
    ComplexMatrix t = pauli_x() * op * pauli_x();
    t *= p;
    out += t;
  }
  return out;
}

// --- dense states -------------------------------------------------------------

namespace {

void check_dense_range(int n, const char* who) {
  if (n < 2 || n > 12)
    throw std::invalid_argument(std::string(who) + ": n=" + std::to_string(n) +
                                " outside dense range [2,12]");
}

DenseState pure_state(int n, const std::vector<cplx>& psi) {
  DenseState s;
  s.n_qubits = n;
  const std::size_t dim = psi.size();
  s.rho = ComplexMatrix(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) s.rho(r, c) = psi[r] * std::conj(psi[c]);
  return s;
}

}  // namespace

std::vector<cplx> ghz_vector(int n) {
  check_dense_range(n, "ghz_vector");
  std::vector<cplx> psi(std::size_t{1} << n, 0.0);
  psi.front() = 1.0 / std::sqrt(2.0);
  psi.back() = 1.0 / std::sqrt(2.0);
  return psi;
}

std::vector<cplx> w_vector(int n) {
  check_dense_range(n, "w_vector");
  std::vector<cplx> psi(std::size_t{1} << n, 0.0);
  const double amp = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) psi[std::size_t{1} << i] = amp;
  return psi;
}

DenseState ghz_dense(int n) { return pure_state(n, ghz_vector(n)); }
DenseState w_dense(int n) { return pure_state(n, w_vector(n)); }

GroundState tfic_ground_state(int n, double field_strength) {
  if (n < 2 || n > 12)
    throw std::invalid_argument(
        "tfic_ground_state: n=" + std::to_string(n) +
        " outside [2,12]; larger chains need DMRG, which is out of scope");
  const std::size_t dim = std::size_t{1} << n;
  ComplexMatrix h(dim, dim);
  // Qubit i (1-based) owns bit n-i; Z eigenvalue is +1 for bit 0.
  for (std::size_t r = 0; r < dim; ++r) {
    double zz = 0.0;
    for (int i = 0; i < n - 1; ++i) {
      const int b1 = (r >> (n - 1 - i)) & 1u;
      const int b2 = (r >> (n - 2 - i)) & 1u;
      zz += (b1 == b2) ? 1.0 : -1.0;
    }
    h(r, r) = zz;
    for (int i = 0; i < n; ++i) h(r ^ (std::size_t{1} << (n - 1 - i)), r) += field_strength;
  }
  const HermitianEig eig = hermitian_eig(h);
  GroundState g;
  g.energy = eig.eigenvalues.front();
  g.vector.resize(dim);
  for (std::size_t r = 0; r < dim; ++r) g.vector[r] = eig.eigenvectors(r, 0);
  g.state = pure_state(n, g.vector);
  return g;
}

DenseState apply_channel_dense(const DenseState& state, const NoiseChannel& channel) {
  if (channel.is_identity()) return state;
  const int n = state.n_qubits;
  const std::size_t dim = state.rho.rows();
  const double p = channel.strength;
  DenseState out = state;
  for (int qi = 0; qi < n; ++qi) {
    const std::size_t bit = std::size_t{1} << (n - 1 - qi);
    const ComplexMatrix& rho = out.rho;
    ComplexMatrix next(dim, dim);
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t c = 0; c < dim; ++c) {
        const bool rb = r & bit, cb = c & bit;
        const cplx flipped = rho(r ^ bit, c ^ bit);
        if (channel.kind == NoiseChannel::Kind::Depolarize) {
          // X gives +flipped; Y gives sign*flipped; Z gives sign*rho with
          // sign = +1 when the qubit bits of row and column agree.
          const double sign = (rb == cb) ? 1.0 : -1.0;
          next(r, c) = (1.0 - p) * rho(r, c) +
                       (p / 3.0) * ((1.0 + sign) * flipped + sign * rho(r, c));
        } else {
          next(r, c) = (1.0 - p) * rho(r, c) + p * flipped;
        }
      }
    }
    out.rho = std::move(next);
  }
  return out;
}

}  // namespace lmqst
