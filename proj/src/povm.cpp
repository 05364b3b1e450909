#include "lmqst/povm.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace lmqst {
namespace {

// Gauss-Jordan with partial pivoting; a is n x n row-major.
std::vector<double> invert_real(std::vector<double> a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-12)
      throw std::runtime_error("overlap matrix is singular; POVM is not informationally complete");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a[pivot * n + j], a[col * n + j]);
        std::swap(inv[pivot * n + j], inv[col * n + j]);
      }
    }
    const double d = a[col * n + col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col * n + j] /= d;
      inv[col * n + j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r * n + j] -= f * a[col * n + j];
        inv[r * n + j] -= f * inv[col * n + j];
      }
    }
  }
  return inv;
}

int qubit_count_from_dim(std::size_t dim, const char* who) {
  int n = 0;
  std::size_t d = 1;
  while (d < dim) {
    d *= 2;
    ++n;
  }
  if (d != dim || n == 0)
    throw std::invalid_argument(std::string(who) + ": dimension is not a power of two");
  return n;
}

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  while (e-- > 0) r *= base;
  return r;
}

}  // namespace

LocalPovm make_povm(std::string name, std::vector<ComplexMatrix> effects) {
  if (effects.empty()) throw std::invalid_argument("make_povm: no effects");
  LocalPovm p;
  p.name = std::move(name);
  p.m = static_cast<int>(effects.size());
  ComplexMatrix sum(2, 2);
  for (const auto& e : effects) {
    if (e.rows() != 2 || e.cols() != 2)
      throw std::invalid_argument("make_povm: effects must be 2x2");
    if (!e.is_hermitian(1e-12))
      throw std::invalid_argument("make_povm: effect is not Hermitian");
    const auto eig = hermitian_eig(e);
    if (eig.eigenvalues.front() < -1e-12)
      throw std::invalid_argument("make_povm: effect is not positive semidefinite");
    sum += e;
  }
  sum -= ComplexMatrix::identity(2);
  if (sum.frobenius_norm() > 1e-12)
    throw std::invalid_argument("make_povm: effects do not sum to the identity");

  const std::size_t m = effects.size();
  p.t_local.assign(m * m, 0.0);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      p.t_local[a * m + b] = (effects[a] * effects[b]).trace().real();
  p.t_local_inv = invert_real(p.t_local, m);
  p.effects = std::move(effects);
  return p;
}

LocalPovm tetrahedral_povm() {
  const double s23 = std::sqrt(2.0) / 3.0;
  const double s6 = std::sqrt(2.0 / 3.0);
  const double bloch[4][3] = {
      {0.0, 0.0, 1.0},
      {2.0 * s23, 0.0, -1.0 / 3.0},
      {-s23, s6, -1.0 / 3.0},
      {-s23, -s6, -1.0 / 3.0},
  };
  std::vector<ComplexMatrix> effects;
  for (const auto& s : bloch) {
    ComplexMatrix e = ComplexMatrix::identity(2);
    ComplexMatrix t = pauli_x();
    t *= s[0];
    e += t;
    t = pauli_y();
    t *= s[1];
    e += t;
    t = pauli_z();
    t *= s[2];
    e += t;
    e *= 0.25;
    effects.push_back(std::move(e));
  }
  return make_povm("tetra", std::move(effects));
}

LocalPovm pauli4_povm() {
  auto third = [](const ComplexMatrix& pauli) {
    ComplexMatrix e = ComplexMatrix::identity(2);
    e += pauli;
    e *= 1.0 / 6.0;
    return e;
  };
  std::vector<ComplexMatrix> effects;
  effects.push_back(third(pauli_z()));
  effects.push_back(third(pauli_x()));
  effects.push_back(third(pauli_y()));
  ComplexMatrix last = ComplexMatrix::identity(2);
  last -= effects[0];
  last -= effects[1];
  last -= effects[2];
  effects.push_back(std::move(last));
  return make_povm("pauli4", std::move(effects));
}

LocalPovm povm_by_name(const std::string& name) {
  if (name == "tetra") return tetrahedral_povm();
  if (name == "pauli4") return pauli4_povm();
  throw std::invalid_argument("unknown POVM '" + name + "' (expected tetra or pauli4)");
}

ComplexMatrix joint_effect(const LocalPovm& povm, const std::vector<int>& outcome) {
  const int n = static_cast<int>(outcome.size());
  if (n < 1 || n > 12)
    throw std::invalid_argument("joint_effect: qubit count " + std::to_string(n) +
                                " outside dense guard [1,12]");
  for (int a : outcome)
    if (a < 0 || a >= povm.m) throw std::invalid_argument("joint_effect: outcome index out of range");
  ComplexMatrix acc = povm.effects[outcome[0]];
  for (int i = 1; i < n; ++i) acc = kron(acc, povm.effects[outcome[i]]);
  return acc;
}

void validate_density(const ComplexMatrix& rho, double tol) {
  if (rho.rows() != rho.cols())
    throw std::invalid_argument("density matrix is not square");
  const double herm = rho.hermiticity_defect();
  if (herm > tol)
    throw std::invalid_argument("density matrix is not Hermitian (defect " +
                                std::to_string(herm) + ")");
  const double tr = rho.trace().real();
  if (std::abs(tr - 1.0) > tol)
    throw std::invalid_argument("density matrix trace " + std::to_string(tr) + " is not 1");
  if (!cholesky_psd_check(rho, tol))
    throw std::invalid_argument("density matrix is not positive semidefinite (below -" +
                                std::to_string(tol) + ")");
}

std::vector<double> probs_from_density(const LocalPovm& povm, const ComplexMatrix& rho) {
  const int n = qubit_count_from_dim(rho.rows(), "probs_from_density");
  if (n > 10) throw std::invalid_argument("probs_from_density: N > 10 is out of scope");
  validate_density(rho);

  const std::size_t m = static_cast<std::size_t>(povm.m);
  const std::size_t dim = rho.rows();

  // Reindex rho[r][c] into site-major pair digits s_i = 2 r_i + c_i.
  std::vector<cplx> x(ipow(4, n));
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      std::size_t idx = 0;
      for (int i = n - 1; i >= 0; --i) {
        const std::size_t rb = (r >> i) & 1u, cb = (c >> i) & 1u;
        idx = idx * 4 + (2 * rb + cb);
      }
      x[idx] = rho(r, c);
    }
  }

  // coeff[a][2r+c] = M^a(c, r) so each mode contraction realizes tr over one site.
  std::vector<cplx> coeff(m * 4);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t rb = 0; rb < 2; ++rb)
      for (std::size_t cb = 0; cb < 2; ++cb)
        coeff[a * 4 + 2 * rb + cb] = povm.effects[a](cb, rb);

  std::size_t pre = 1, post = ipow(4, n - 1);
  for (int site = 0; site < n; ++site) {
    std::vector<cplx> next(pre * m * post);
    for (std::size_t pp = 0; pp < pre; ++pp)
      for (std::size_t a = 0; a < m; ++a) {
        cplx* dst = next.data() + (pp * m + a) * post;
        for (std::size_t s = 0; s < 4; ++s) {
          const cplx w = coeff[a * 4 + s];
          const cplx* src = x.data() + (pp * 4 + s) * post;
          for (std::size_t q = 0; q < post; ++q) dst[q] += w * src[q];
        }
      }
    x = std::move(next);
    pre *= m;
    post /= 4;
  }

  std::vector<double> probs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) probs[i] = x[i].real();
  return probs;
}

DensityFromProbs density_from_probs(const LocalPovm& povm, const std::vector<double>& probs,
                                    int n_qubits) {
  if (n_qubits < 1 || n_qubits > 10)
    throw std::invalid_argument("density_from_probs: N outside [1,10]");
  const std::size_t m = static_cast<std::size_t>(povm.m);
  if (probs.size() != ipow(m, n_qubits))
    throw std::invalid_argument("density_from_probs: expected " +
                                std::to_string(ipow(m, n_qubits)) + " probabilities, got " +
                                std::to_string(probs.size()));
  double total = 0.0;
  for (double p : probs) total += p;

  // q = (T_loc^{-1})^{xN} P, one mode at a time.
  std::vector<double> q(probs);
  {
    std::size_t pre = 1, post = ipow(m, n_qubits - 1);
    for (int site = 0; site < n_qubits; ++site) {
      std::vector<double> next(q.size(), 0.0);
      for (std::size_t pp = 0; pp < pre; ++pp)
        for (std::size_t b = 0; b < m; ++b) {
          double* dst = next.data() + (pp * m + b) * post;
          for (std::size_t a = 0; a < m; ++a) {
            const double w = povm.t_local_inv[b * m + a];
            const double* src = q.data() + (pp * m + a) * post;
            for (std::size_t t = 0; t < post; ++t) dst[t] += w * src[t];
          }
        }
      q = std::move(next);
      pre *= m;
      post /= m;
    }
  }

  // rho = sum_a q_a M^{a_1} x ... x M^{a_N}: expand each outcome axis into a
  // site pair-digit axis s = 2r + c with expand[s][a] = M^a(r, c).
  std::vector<cplx> expand(4 * m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t rb = 0; rb < 2; ++rb)
      for (std::size_t cb = 0; cb < 2; ++cb)
        expand[(2 * rb + cb) * m + a] = povm.effects[a](rb, cb);

  std::vector<cplx> x(q.begin(), q.end());
  {
    std::size_t pre = 1, post = ipow(m, n_qubits - 1);
    for (int site = 0; site < n_qubits; ++site) {
      std::vector<cplx> next(pre * 4 * post);
      for (std::size_t pp = 0; pp < pre; ++pp)
        for (std::size_t s = 0; s < 4; ++s) {
          cplx* dst = next.data() + (pp * 4 + s) * post;
          for (std::size_t a = 0; a < m; ++a) {
            const cplx w = expand[s * m + a];
            const cplx* src = x.data() + (pp * m + a) * post;
            for (std::size_t t = 0; t < post; ++t) dst[t] += w * src[t];
          }
        }
      x = std::move(next);
      pre *= 4;
      post /= m;
    }
  }

  const std::size_t dim = ipow(2, n_qubits);
  DensityFromProbs out;
  out.rho = ComplexMatrix(dim, dim);
  out.normalized_input = std::abs(total - 1.0) <= 1e-6;
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) {
      std::size_t idx = 0;
      for (int i = n_qubits - 1; i >= 0; --i) {
        const std::size_t rb = (r >> i) & 1u, cb = (c >> i) & 1u;
        idx = idx * 4 + (2 * rb + cb);
      }
      out.rho(r, c) = x[idx];
    }
  return out;
}

LocalPovm adjoint_channel_effects(const LocalPovm& povm, const NoiseChannel& channel) {
  if (channel.is_identity()) return povm;
  std::vector<ComplexMatrix> effects;
  effects.reserve(povm.effects.size());
  for (const auto& e : povm.effects) effects.push_back(apply_channel_2x2(channel, e));
  return make_povm(povm.name + "+" + channel.to_string(), std::move(effects));
}

}  // namespace lmqst
