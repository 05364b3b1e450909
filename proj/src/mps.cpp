#include <cmath>
#include <stdexcept>

#include "lmqst/quantum.hpp"

namespace lmqst {
namespace {

// One transfer step: env'[b'][b] = sum conj(A[l'][s'][b']) O(s',s) A[l][s][b] env[l'][l].
// env is dl x dl over (bra, ket) bonds; returns dr x dr. O may be null for identity.
std::vector<cplx> transfer(const std::vector<cplx>& env, const std::vector<cplx>& site,
                           int dl, int dr, const ComplexMatrix* op) {
  // t[l'][s][b] = sum_l env[l'][l] * A[l][s][b]
  std::vector<cplx> t(static_cast<std::size_t>(dl) * 2 * dr, 0.0);
  for (int lp = 0; lp < dl; ++lp)
    for (int l = 0; l < dl; ++l) {
      const cplx e = env[static_cast<std::size_t>(lp) * dl + l];
      if (e == 0.0) continue;
      const cplx* a = site.data() + static_cast<std::size_t>(l) * 2 * dr;
      cplx* dst = t.data() + static_cast<std::size_t>(lp) * 2 * dr;
      for (int sb = 0; sb < 2 * dr; ++sb) dst[sb] += e * a[sb];
    }
  // u[l'][s'][b] = sum_s O(s',s) t[l'][s][b]
  std::vector<cplx> u;
  if (op) {
    u.assign(t.size(), 0.0);
    for (int lp = 0; lp < dl; ++lp)
      for (int sp = 0; sp < 2; ++sp)
        for (int s = 0; s < 2; ++s) {
          const cplx w = (*op)(sp, s);
          if (w == 0.0) continue;
          const cplx* src = t.data() + (static_cast<std::size_t>(lp) * 2 + s) * dr;
          cplx* dst = u.data() + (static_cast<std::size_t>(lp) * 2 + sp) * dr;
          for (int b = 0; b < dr; ++b) dst[b] += w * src[b];
        }
  } else {
    u = std::move(t);
  }
  // out[b'][b] = sum_{l',s'} conj(A[l'][s'][b']) u[l'][s'][b]
  std::vector<cplx> out(static_cast<std::size_t>(dr) * dr, 0.0);
  for (int lp = 0; lp < dl; ++lp)
    for (int sp = 0; sp < 2; ++sp) {
      const cplx* a = site.data() + (static_cast<std::size_t>(lp) * 2 + sp) * dr;
      const cplx* src = u.data() + (static_cast<std::size_t>(lp) * 2 + sp) * dr;
      for (int bp = 0; bp < dr; ++bp) {
        const cplx ac = std::conj(a[bp]);
        if (ac == 0.0) continue;
        cplx* dst = out.data() + static_cast<std::size_t>(bp) * dr;
        for (int b = 0; b < dr; ++b) dst[b] += ac * src[b];
      }
    }
  return out;
}

void check_mps(const Mps& mps) {
  if (mps.n_qubits < 2) throw std::invalid_argument("Mps: need at least 2 sites");
  if (mps.left_dims.front() != 1 || mps.right_dims.back() != 1)
    throw std::invalid_argument("Mps: boundary bonds must have dimension 1");
}

}  // namespace

double Mps::norm() const {
  std::vector<cplx> env{1.0};
  for (int i = 0; i < n_qubits; ++i)
    env = transfer(env, sites[i], left_dims[i], right_dims[i], nullptr);
  return env[0].real();
}

Mps ghz_mps(int n) {
  if (n < 2) throw std::invalid_argument("ghz_mps: n must be >= 2");
  Mps m;
  m.n_qubits = n;
  const double amp = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < n; ++i) {
    const int dl = (i == 0) ? 1 : 2;
    const int dr = (i == n - 1) ? 1 : 2;
    std::vector<cplx> a(static_cast<std::size_t>(dl) * 2 * dr, 0.0);
    for (int s = 0; s < 2; ++s) {
      const int l = (dl == 1) ? 0 : s;
      const int r = (dr == 1) ? 0 : s;
      // Diagonal "copy" tensor; the 1/sqrt(2) weight lives on site 0.
      a[(static_cast<std::size_t>(l) * 2 + s) * dr + r] = (i == 0) ? amp : 1.0;
    }
    m.sites.push_back(std::move(a));
    m.left_dims.push_back(dl);
    m.right_dims.push_back(dr);
  }
  return m;
}

Mps w_mps(int n) {
  if (n < 2) throw std::invalid_argument("w_mps: n must be >= 2");
  Mps m;
  m.n_qubits = n;
  const double w = 1.0 / std::sqrt(static_cast<double>(n));
  // Bond state 0: no excitation placed yet; bond state 1: one placed.
  for (int i = 0; i < n; ++i) {
    const int dl = (i == 0) ? 1 : 2;
    const int dr = (i == n - 1) ? 1 : 2;
    std::vector<cplx> a(static_cast<std::size_t>(dl) * 2 * dr, 0.0);
    auto at = [&](int l, int s, int r) -> cplx& {
      return a[(static_cast<std::size_t>(l) * 2 + s) * dr + r];
    };
    if (i == 0) {
      at(0, 0, 0) = 1.0;            // stay in "none yet"
      at(0, 1, dr == 1 ? 0 : 1) = w;  // place the excitation here
    } else if (i == n - 1) {
      at(1, 0, 0) = 1.0;  // excitation already placed, last qubit 0
      at(0, 1, 0) = w;    // place it on the last qubit
    } else {
      at(0, 0, 0) = 1.0;
      at(1, 0, 1) = 1.0;
      at(0, 1, 1) = w;
    }
    m.sites.push_back(std::move(a));
    m.left_dims.push_back(dl);
    m.right_dims.push_back(dr);
  }
  return m;
}

std::vector<cplx> mps_to_vector(const Mps& mps) {
  check_mps(mps);
  if (mps.n_qubits > 12) throw std::invalid_argument("mps_to_vector: n > 12 dense guard");
  std::vector<cplx> table{1.0};  // (basis prefix) x (right bond), row-major
  for (int i = 0; i < mps.n_qubits; ++i) {
    const int dl = mps.left_dims[i], dr = mps.right_dims[i];
    const std::size_t prefixes = table.size() / dl;
    std::vector<cplx> next(prefixes * 2 * dr, 0.0);
    for (std::size_t x = 0; x < prefixes; ++x)
      for (int s = 0; s < 2; ++s)
        for (int l = 0; l < dl; ++l) {
          const cplx tv = table[x * dl + l];
          if (tv == 0.0) continue;
          for (int r = 0; r < dr; ++r)
            next[(x * 2 + s) * dr + r] +=
                tv * mps.sites[i][(static_cast<std::size_t>(l) * 2 + s) * dr + r];
        }
    table = std::move(next);
  }
  return table;  // right bond is 1, so this is the 2^n amplitude vector
}

double mps_outcome_prob(const Mps& mps, const LocalPovm& povm, const std::vector<int>& outcome) {
  check_mps(mps);
  if (static_cast<int>(outcome.size()) != mps.n_qubits)
    throw std::invalid_argument("mps_outcome_prob: outcome length != n_qubits");
  std::vector<cplx> env{1.0};
  for (int i = 0; i < mps.n_qubits; ++i) {
    const int a = outcome[i];
    if (a < 0 || a >= povm.m)
      throw std::invalid_argument("mps_outcome_prob: outcome index out of range");
    env = transfer(env, mps.sites[i], mps.left_dims[i], mps.right_dims[i], &povm.effects[a]);
  }
  return env[0].real();
}

MpsSampler::MpsSampler(Mps mps, LocalPovm povm) : mps_(std::move(mps)), povm_(std::move(povm)) {
  check_mps(mps_);
  const int n = mps_.n_qubits;
  right_env_.resize(n + 1);
  right_env_[n] = {1.0};
  // Build right environments with identity insertions by running the
  // transfer on the mirrored tensors (swap left/right bond roles).
  for (int i = n - 1; i >= 0; --i) {
    const int dl = mps_.left_dims[i], dr = mps_.right_dims[i];
    std::vector<cplx> mirrored(static_cast<std::size_t>(dr) * 2 * dl);
    for (int l = 0; l < dl; ++l)
      for (int s = 0; s < 2; ++s)
        for (int r = 0; r < dr; ++r)
          mirrored[(static_cast<std::size_t>(r) * 2 + s) * dl + l] =
              mps_.sites[i][(static_cast<std::size_t>(l) * 2 + s) * dr + r];
    right_env_[i] = transfer(right_env_[i + 1], mirrored, dr, dl, nullptr);
  }
}

std::vector<int> MpsSampler::sample(RngStream& rng) const {
  const int n = mps_.n_qubits;
  const int m = povm_.m;
  std::vector<int> outcome(n);
  std::vector<cplx> env{1.0};
  for (int i = 0; i < n; ++i) {
    const int dl = mps_.left_dims[i], dr = mps_.right_dims[i];
    std::vector<std::vector<cplx>> cand(m);
    std::vector<double> weight(m);
    double total = 0.0;
    for (int a = 0; a < m; ++a) {
      cand[a] = transfer(env, mps_.sites[i], dl, dr, &povm_.effects[a]);
      cplx paired = 0.0;
      const std::vector<cplx>& renv = right_env_[i + 1];
      for (std::size_t k = 0; k < cand[a].size(); ++k) paired += cand[a][k] * renv[k];
      weight[a] = paired.real();
      if (weight[a] < -1e-12) throw std::runtime_error("mps_exact_sample: negative conditional");
      weight[a] = std::max(weight[a], 0.0);
      total += weight[a];
    }
    if (total <= 0.0) throw std::runtime_error("mps_exact_sample: vanishing conditional mass");
    double u = rng.uniform() * total;
    int pick = m - 1;
    for (int a = 0; a < m; ++a) {
      if (u < weight[a]) {
        pick = a;
        break;
      }
      u -= weight[a];
    }
    outcome[i] = pick;
    env = std::move(cand[pick]);
    // Keep the environment O(1) in magnitude; conditionals renormalize anyway.
    const double scale = 1.0 / total;
    for (cplx& v : env) v *= scale;
  }
  return outcome;
}

}  // namespace lmqst
