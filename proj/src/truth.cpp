#include "lmqst/truth.hpp"

#include <cmath>
#include <stdexcept>

namespace lmqst {

StateSpec::Family StateSpec::parse_family(const std::string& name) {
  if (name == "ghz") return Family::Ghz;
  if (name == "w") return Family::W;
  if (name == "tfic" || name == "ising") return Family::Tfic;
  throw std::invalid_argument("unknown state family '" + name + "' (expected ghz, w or tfic)");
}

std::string StateSpec::family_name() const {
  switch (family) {
    case Family::Ghz:
      return "ghz";
    case Family::W:
      return "w";
    case Family::Tfic:
      return "tfic";
  }
  return "ghz";
}

std::string StateSpec::to_string() const {
  std::string s = family_name() + " n=" + std::to_string(n_qubits);
  if (family == Family::Tfic && field_strength != 1.0)
    s += " field=" + std::to_string(field_strength);
  if (!channel.is_identity()) s += " noise=" + channel.to_string();
  return s;
}

TruthModel::TruthModel(const StateSpec& spec, const LocalPovm& base_povm)
    : spec_(spec), povm_(adjoint_channel_effects(base_povm, spec.channel)) {
  switch (spec_.family) {
    case StateSpec::Family::Ghz:
      mps_ = std::make_unique<MpsSampler>(ghz_mps(spec_.n_qubits), povm_);
      break;
    case StateSpec::Family::W:
      mps_ = std::make_unique<MpsSampler>(w_mps(spec_.n_qubits), povm_);
      break;
    case StateSpec::Family::Tfic: {
      psi_ = tfic_ground_state(spec_.n_qubits, spec_.field_strength).vector;
      kraus_.resize(povm_.effects.size());
      for (std::size_t a = 0; a < povm_.effects.size(); ++a) {
        const HermitianEig eig = hermitian_eig(povm_.effects[a]);
        for (std::size_t k = 0; k < 2; ++k) {
          const double lam = std::max(eig.eigenvalues[k], 0.0);
          if (lam <= 1e-15) continue;
          const double root = std::sqrt(lam);
          kraus_[a].push_back({root * eig.eigenvectors(0, k), root * eig.eigenvectors(1, k)});
        }
      }
      break;
    }
  }
}

double TruthModel::prob(const std::vector<int>& outcome) const {
  if (static_cast<int>(outcome.size()) != spec_.n_qubits)
    throw std::invalid_argument("TruthModel::prob: outcome length != n_qubits");
  if (mps_) return mps_outcome_prob(mps_->mps(), povm_, outcome);

  // <psi| (x)M^{a_i} |psi> by applying one 2x2 effect per site to the ket.
  const int n = spec_.n_qubits;
  std::vector<cplx> phi = psi_;
  for (int i = 0; i < n; ++i) {
    const ComplexMatrix& eff = povm_.effects[outcome[i]];
    const std::size_t bit = std::size_t{1} << (n - 1 - i);
    for (std::size_t r = 0; r < phi.size(); ++r) {
      if (r & bit) continue;
      const cplx lo = phi[r], hi = phi[r | bit];
      phi[r] = eff(0, 0) * lo + eff(0, 1) * hi;
      phi[r | bit] = eff(1, 0) * lo + eff(1, 1) * hi;
    }
  }
  cplx acc = 0.0;
  for (std::size_t r = 0; r < phi.size(); ++r) acc += std::conj(psi_[r]) * phi[r];
  return acc.real();
}

std::vector<int> TruthModel::sample(RngStream& rng) const {
  if (mps_) return mps_->sample(rng);
  return sample_dense(rng);
}

std::vector<int> TruthModel::sample_dense(RngStream& rng) const {
  // Chain-rule sampling over (outcome, kraus-branch) pairs: conditioning on a
  // branch contracts one qubit away and keeps the remaining state pure.
  const int n = spec_.n_qubits;
  const int m = povm_.m;
  std::vector<int> outcome(n);
  std::vector<cplx> psi = psi_;
  std::vector<std::vector<cplx>> branch;
  std::vector<double> weight;
  std::vector<int> branch_outcome;
  for (int i = 0; i < n; ++i) {
    const std::size_t half = psi.size() / 2;
    branch.clear();
    weight.clear();
    branch_outcome.clear();
    double total = 0.0;
    for (int a = 0; a < m; ++a) {
      for (const auto& v : kraus_[a]) {
        // <v| on the leading qubit (most significant bit).
        std::vector<cplx> nxt(half);
        double nrm = 0.0;
        for (std::size_t r = 0; r < half; ++r) {
          nxt[r] = std::conj(v[0]) * psi[r] + std::conj(v[1]) * psi[r + half];
          nrm += std::norm(nxt[r]);
        }
        branch.push_back(std::move(nxt));
        weight.push_back(nrm);
        branch_outcome.push_back(a);
        total += nrm;
      }
    }
    if (total <= 0.0) throw std::runtime_error("dense sampler: vanishing conditional mass");
    double u = rng.uniform() * total;
    std::size_t pick = branch.size() - 1;
    for (std::size_t b = 0; b < branch.size(); ++b) {
      if (u < weight[b]) {
        pick = b;
        break;
      }
      u -= weight[b];
    }
    outcome[i] = branch_outcome[pick];
    psi = std::move(branch[pick]);
    const double inv = 1.0 / std::sqrt(weight[pick]);
    for (cplx& x : psi) x *= inv;
  }
  return outcome;
}

namespace {

void enumerate_mps_rec(const Mps& mps, const LocalPovm& povm, int site,
                       const std::vector<cplx>& env, std::size_t base, double* out) {
  const int n = mps.n_qubits;
  if (site == n) {
    out[base] = env[0].real();
    return;
  }
  // Re-run the per-effect transfer by hand to reuse mps internals.
  const std::size_t stride = [&] {
    std::size_t s = 1;
    for (int i = site + 1; i < n; ++i) s *= povm.m;
    return s;
  }();
  for (int a = 0; a < povm.m; ++a) {
    std::vector<int> dummy;
    // Single-site contraction: reuse mps_outcome_prob's transfer via a
    // one-step helper below.
    extern std::vector<cplx> mps_transfer_step(const Mps&, const LocalPovm&, int, int,
                                               const std::vector<cplx>&);
    std::vector<cplx> nxt = mps_transfer_step(mps, povm, site, a, env);
    enumerate_mps_rec(mps, povm, site + 1, nxt, base + a * stride, out);
  }
}

}  // namespace

std::vector<double> TruthModel::enumerate_probs() const {
  const int n = spec_.n_qubits;
  if (n > 10) throw std::invalid_argument("enumerate_probs: N > 10 is out of scope");
  std::size_t count = 1;
  for (int i = 0; i < n; ++i) count *= povm_.m;
  std::vector<double> out(count);
  std::vector<int> outcome(n, 0);
  // Lexicographic walk with shared prefixes is possible, but a direct loop
  // is simple and fast enough at N <= 10.
  for (std::size_t idx = 0; idx < count; ++idx) {
    out[idx] = prob(outcome);
    for (int i = n - 1; i >= 0; --i) {
      if (++outcome[i] < povm_.m) break;
      outcome[i] = 0;
    }
  }
  return out;
}

}  // namespace lmqst
