#include "lmqst/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lmqst/kernels.hpp"

namespace lmqst {
namespace {

thread_local Tape* t_active_tape = nullptr;

std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

std::size_t shape_size(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

bool recording() { return t_active_tape != nullptr; }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->data.assign(shape_size(t.s_->shape), 0.0);
  t.s_->requires_grad = requires_grad;
  if (requires_grad) t.s_->grad.assign(t.s_->data.size(), 0.0);
  return t;
}

Tensor Tensor::from_vector(std::vector<std::size_t> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from_vector: " + shape_str(shape) + " needs " +
                                std::to_string(shape_size(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->data = std::move(values);
  t.s_->requires_grad = requires_grad;
  if (requires_grad) t.s_->grad.assign(t.s_->data.size(), 0.0);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<std::size_t> shape, RngStream& rng, double stddev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.s_->data) x = rng.normal(stddev);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("Tensor::rows: rank != 2");
  return s_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("Tensor::cols: rank != 2");
  return s_->shape[1];
}

double* Tensor::grad() { return s_->requires_grad ? s_->grad.data() : nullptr; }
const double* Tensor::grad() const { return s_->requires_grad ? s_->grad.data() : nullptr; }

std::vector<double>& Tensor::grad_values() {
  if (!s_->requires_grad) throw std::logic_error("Tensor::grad_values: no gradient");
  return s_->grad;
}

void Tensor::zero_grad() {
  if (s_->requires_grad) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("Tensor::item: size != 1");
  return s_->data[0];
}

// --- Tape -------------------------------------------------------------------

Tape::Tape() {
  if (t_active_tape != nullptr) throw std::logic_error("Tape: a tape is already active on this thread");
  t_active_tape = this;
}

Tape::~Tape() { t_active_tape = nullptr; }

Tape* Tape::active() { return t_active_tape; }

void Tape::backward(Tensor loss) {
  if (used_) throw std::logic_error("Tape::backward: tape already replayed");
  if (loss.size() != 1 || !loss.requires_grad()) {
    throw std::invalid_argument("Tape::backward: loss must be a recorded scalar");
  }
  used_ = true;
  loss.grad_values()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// --- op helpers -------------------------------------------------------------

namespace {

Tensor make_output(std::vector<std::size_t> shape, bool needs_grad) {
  return Tensor::zeros(std::move(shape), needs_grad);
}

bool want_grad(Tensor a) { return recording() && a.requires_grad(); }

}  // namespace

// --- ops --------------------------------------------------------------------

Tensor matmul(Tensor a, Tensor b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const bool needs = want_grad(a) || want_grad(b);
  Tensor out = make_output({m, n}, needs);
  const auto& K = kernels::active();
  K.matmul(a.data(), b.data(), out.data(), m, k, n);
  if (needs) {
    Tape::active()->record([a, b, out, m, k, n]() mutable {
      const auto& K2 = kernels::active();
      if (a.requires_grad()) K2.matmul_nt_acc(out.grad(), b.data(), a.grad(), m, n, k);
      if (b.requires_grad()) K2.matmul_tn_acc(a.data(), out.grad(), b.grad(), k, m, n);
    });
  }
  return out;
}

Tensor matmul_transb(Tensor a, Tensor b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) shape_error("matmul_transb", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const bool needs = want_grad(a) || want_grad(b);
  Tensor out = make_output({m, n}, needs);
  const auto& K = kernels::active();
  K.matmul_nt_acc(a.data(), b.data(), out.data(), m, k, n);
  if (needs) {
    Tape::active()->record([a, b, out, m, k, n]() mutable {
      const auto& K2 = kernels::active();
      if (a.requires_grad()) K2.matmul_acc(out.grad(), b.data(), a.grad(), m, n, k);
      if (b.requires_grad()) K2.matmul_tn_acc(out.grad(), a.data(), b.grad(), n, m, k);
    });
  }
  return out;
}

Tensor add(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_error("add", a, b);
  const bool needs = want_grad(a) || want_grad(b);
  Tensor out = make_output(a.shape(), needs);
  kernels::active().add(a.data(), b.data(), out.data(), a.size());
  if (needs) {
    Tape::active()->record([a, b, out]() mutable {
      const auto& K = kernels::active();
      if (a.requires_grad()) K.axpy(1.0, out.grad(), a.grad(), a.size());
      if (b.requires_grad()) K.axpy(1.0, out.grad(), b.grad(), b.size());
    });
  }
  return out;
}

Tensor add_bias_rows(Tensor a, Tensor bias) {
  if (a.rank() != 2 || bias.size() != a.cols()) shape_error("add_bias_rows", a, bias);
  const std::size_t r = a.rows(), c = a.cols();
  const bool needs = want_grad(a) || want_grad(bias);
  Tensor out = make_output({r, c}, needs);
  const auto& K = kernels::active();
  for (std::size_t i = 0; i < r; ++i)
    K.add(a.data() + i * c, bias.data(), out.data() + i * c, c);
  if (needs) {
    Tape::active()->record([a, bias, out, r, c]() mutable {
      const auto& K2 = kernels::active();
      if (a.requires_grad()) K2.axpy(1.0, out.grad(), a.grad(), r * c);
      if (bias.requires_grad()) {
        for (std::size_t i = 0; i < r; ++i)
          K2.axpy(1.0, out.grad() + i * c, bias.grad(), c);
      }
    });
  }
  return out;
}

Tensor mul(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  const bool needs = want_grad(a) || want_grad(b);
  Tensor out = make_output(a.shape(), needs);
  kernels::active().mul(a.data(), b.data(), out.data(), a.size());
  if (needs) {
    Tape::active()->record([a, b, out]() mutable {
      const double* g = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad();
        const double* bv = b.data();
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        const double* av = a.data();
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(Tensor a, double s) {
  const bool needs = want_grad(a);
  Tensor out = make_output(a.shape(), needs);
  kernels::active().scale(a.data(), s, out.data(), a.size());
  if (needs) {
    Tape::active()->record([a, out, s]() mutable {
      kernels::active().axpy(s, out.grad(), a.grad(), a.size());
    });
  }
  return out;
}

Tensor relu(Tensor a) {
  const bool needs = want_grad(a);
  Tensor out = make_output(a.shape(), needs);
  kernels::active().relu(a.data(), out.data(), a.size());
  if (needs) {
    Tape::active()->record([a, out]() mutable {
      kernels::active().relu_backward(a.data(), out.grad(), a.grad(), a.size());
    });
  }
  return out;
}

Tensor log_elem(Tensor a) {
  const bool needs = want_grad(a);
  Tensor out = make_output(a.shape(), needs);
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::log(a.at(i));
  if (needs) {
    Tape::active()->record([a, out]() mutable {
      double* ga = a.grad();
      const double* g = out.grad();
      const double* x = a.data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i] / x[i];
    });
  }
  return out;
}

Tensor sum_all(Tensor a) {
  const bool needs = want_grad(a);
  Tensor out = make_output({1}, needs);
  out.data()[0] = kernels::active().reduce_sum(a.data(), a.size());
  if (needs) {
    Tape::active()->record([a, out]() mutable {
      const double g = out.grad()[0];
      double* ga = a.grad();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

namespace {

// Row softmax with optional additive mask; masked (-inf) entries produce an
// exact 0. Throws if a row has no finite entry.
void masked_row_softmax(const double* in, const double* mask, double* out,
                        std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = in + i * cols;
    const double* mk = mask ? mask + i * cols : nullptr;
    double* y = out + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = mk ? x[j] + mk[j] : x[j];
      if (v > mx) mx = v;
    }
    if (!std::isfinite(mx)) throw std::runtime_error("softmax_rows: fully masked attention row");
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = mk ? x[j] + mk[j] : x[j];
      y[j] = std::exp(v - mx);
      sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

void softmax_rows_backward(Tensor a, Tensor out) {
  const std::size_t r = out.rows(), c = out.cols();
  const double* y = out.data();
  const double* g = out.grad();
  double* ga = a.grad();
  for (std::size_t i = 0; i < r; ++i) {
    const double d = kernels::active().dot(g + i * c, y + i * c, c);
    for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[i * c + j] * (g[i * c + j] - d);
  }
}

}  // namespace

Tensor softmax_rows(Tensor a, const Tensor* mask) {
  if (a.rank() != 2) throw std::invalid_argument("softmax_rows: rank != 2");
  if (mask && mask->shape() != a.shape()) shape_error("softmax_rows(mask)", a, *mask);
  const bool needs = want_grad(a);
  Tensor out = make_output(a.shape(), needs);
  masked_row_softmax(a.data(), mask ? mask->data() : nullptr, out.data(), a.rows(), a.cols());
  if (needs) {
    Tape::active()->record([a, out]() mutable { softmax_rows_backward(a, out); });
  }
  return out;
}

Tensor log_softmax_rows(Tensor a) {
  if (a.rank() != 2) throw std::invalid_argument("log_softmax_rows: rank != 2");
  const std::size_t r = a.rows(), c = a.cols();
  const bool needs = want_grad(a);
  Tensor out = make_output(a.shape(), needs);
  const auto& K = kernels::active();
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = K.reduce_max(x, c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lse;
  }
  if (needs) {
    Tape::active()->record([a, out, r, c]() mutable {
      const double* y = out.data();
      const double* g = out.grad();
      double* ga = a.grad();
      for (std::size_t i = 0; i < r; ++i) {
        const double gsum = kernels::active().reduce_sum(g + i * c, c);
        for (std::size_t j = 0; j < c; ++j)
          ga[i * c + j] += g[i * c + j] - std::exp(y[i * c + j]) * gsum;
      }
    });
  }
  return out;
}

Tensor embedding_gather(Tensor table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding_gather: table rank != 2");
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::out_of_range("embedding_gather: id " + std::to_string(id) +
                              " out of range [0," + std::to_string(v) + ")");
    }
  }
  const bool needs = want_grad(table);
  Tensor out = make_output({ids.size(), d}, needs);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::memcpy(out.data() + r * d, table.data() + static_cast<std::size_t>(ids[r]) * d,
                d * sizeof(double));
  if (needs) {
    Tape::active()->record([table, out, ids, d]() mutable {
      const auto& K = kernels::active();
      for (std::size_t r = 0; r < ids.size(); ++r)
        K.axpy(1.0, out.grad() + r * d, table.grad() + static_cast<std::size_t>(ids[r]) * d, d);
    });
  }
  return out;
}

Tensor concat_cols(Tensor a, Tensor b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) shape_error("concat_cols", a, b);
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  const bool needs = want_grad(a) || want_grad(b);
  Tensor out = make_output({r, ca + cb}, needs);
  for (std::size_t i = 0; i < r; ++i) {
    std::memcpy(out.data() + i * (ca + cb), a.data() + i * ca, ca * sizeof(double));
    std::memcpy(out.data() + i * (ca + cb) + ca, b.data() + i * cb, cb * sizeof(double));
  }
  if (needs) {
    Tape::active()->record([a, b, out, r, ca, cb]() mutable {
      const auto& K = kernels::active();
      for (std::size_t i = 0; i < r; ++i) {
        if (a.requires_grad()) K.axpy(1.0, out.grad() + i * (ca + cb), a.grad() + i * ca, ca);
        if (b.requires_grad()) K.axpy(1.0, out.grad() + i * (ca + cb) + ca, b.grad() + i * cb, cb);
      }
    });
  }
  return out;
}

Tensor slice_cols(Tensor a, std::size_t col_begin, std::size_t col_end) {
  if (a.rank() != 2 || col_end > a.cols() || col_begin >= col_end) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(col_begin) + "," +
                                std::to_string(col_end) + ") for " + shape_str(a.shape()));
  }
  const std::size_t r = a.rows(), c = a.cols(), w = col_end - col_begin;
  const bool needs = want_grad(a);
  Tensor out = make_output({r, w}, needs);
  for (std::size_t i = 0; i < r; ++i)
    std::memcpy(out.data() + i * w, a.data() + i * c + col_begin, w * sizeof(double));
  if (needs) {
    Tape::active()->record([a, out, r, c, w, col_begin]() mutable {
      const auto& K = kernels::active();
      for (std::size_t i = 0; i < r; ++i)
        K.axpy(1.0, out.grad() + i * w, a.grad() + i * c + col_begin, w);
    });
  }
  return out;
}

Tensor picked_nll(Tensor log_probs, const std::vector<int>& targets,
                  const std::vector<unsigned char>& active, double denom) {
  if (log_probs.rank() != 2 || targets.size() != log_probs.rows() ||
      active.size() != targets.size()) {
    throw std::invalid_argument("picked_nll: rows/targets/active size mismatch");
  }
  if (denom <= 0.0) throw std::invalid_argument("picked_nll: denom must be positive");
  const std::size_t c = log_probs.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (!active[r]) continue;
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw std::out_of_range("picked_nll: target id out of range");
    total -= log_probs.at(r, t);
  }
  const bool needs = want_grad(log_probs);
  Tensor out = make_output({1}, needs);
  out.data()[0] = total / denom;
  if (needs) {
    Tape::active()->record([log_probs, out, targets, active, denom, c]() mutable {
      const double g = out.grad()[0] / denom;
      double* gl = log_probs.grad();
      for (std::size_t r = 0; r < targets.size(); ++r) {
        if (active[r]) gl[r * c + static_cast<std::size_t>(targets[r])] -= g;
      }
    });
  }
  return out;
}

// --- fused causal attention ---------------------------------------------------

namespace {

struct AttnDims {
  std::size_t batch, seq, heads, dh, d;
  double scale;
};

void gather_head(const double* src, double* dst, std::size_t base_row, std::size_t seq,
                 std::size_t d, std::size_t h, std::size_t dh) {
  for (std::size_t i = 0; i < seq; ++i)
    std::memcpy(dst + i * dh, src + (base_row + i) * d + h * dh, dh * sizeof(double));
}

void scatter_head_acc(const double* src, double* dst, std::size_t base_row, std::size_t seq,
                      std::size_t d, std::size_t h, std::size_t dh) {
  for (std::size_t i = 0; i < seq; ++i)
    for (std::size_t cidx = 0; cidx < dh; ++cidx)
      dst[(base_row + i) * d + h * dh + cidx] += src[i * dh + cidx];
}

// Softmax over the causal prefix j <= i of each row; entries above the
// diagonal are never read and come out exactly 0.
void causal_softmax(double* w, std::size_t seq) {
  for (std::size_t i = 0; i < seq; ++i) {
    double* row = w + i * seq;
    double mx = row[0];
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j <= i; ++j) row[j] *= inv;
    for (std::size_t j = i + 1; j < seq; ++j) row[j] = 0.0;
  }
}

}  // namespace

Tensor masked_causal_attention(Tensor q, Tensor k, Tensor v,
                               Tensor pos_q, Tensor pos_k,
                               std::size_t batch, std::size_t seq_len,
                               std::size_t heads, double scale) {
  const std::size_t d = q.cols();
  if (k.shape() != q.shape() || v.shape() != q.shape()) shape_error("attention", q, k);
  if (q.rows() != batch * seq_len)
    throw std::invalid_argument("attention: rows != batch*seq_len");
  if (pos_q.rows() != seq_len || pos_q.cols() != d || pos_k.shape() != pos_q.shape())
    throw std::invalid_argument("attention: positional projections must be (seq_len x d)");
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("attention: head count must divide embedding size");
  const std::size_t dh = d / heads;
  const AttnDims dims{batch, seq_len, heads, dh, d, scale};

  const bool needs = want_grad(q) || want_grad(k) || want_grad(v) || want_grad(pos_q) ||
                     want_grad(pos_k);
  Tensor out = make_output({batch * seq_len, d}, needs);

  const auto& K = kernels::active();
  // Positional score matrices are shared across the batch: one per head.
  std::vector<double> pos_scores(heads * seq_len * seq_len, 0.0);
  {
    std::vector<double> pq(seq_len * dh), pk(seq_len * dh);
    for (std::size_t h = 0; h < heads; ++h) {
      gather_head(pos_q.data(), pq.data(), 0, seq_len, d, h, dh);
      gather_head(pos_k.data(), pk.data(), 0, seq_len, d, h, dh);
      K.matmul_nt_acc(pq.data(), pk.data(), pos_scores.data() + h * seq_len * seq_len,
                      seq_len, dh, seq_len);
    }
  }

  auto weights = std::make_shared<std::vector<double>>(batch * heads * seq_len * seq_len);
  {
    std::vector<double> qs(seq_len * dh), ks(seq_len * dh), vs(seq_len * dh), zo(seq_len * dh);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = b * seq_len;
      for (std::size_t h = 0; h < heads; ++h) {
        gather_head(q.data(), qs.data(), base, seq_len, d, h, dh);
        gather_head(k.data(), ks.data(), base, seq_len, d, h, dh);
        gather_head(v.data(), vs.data(), base, seq_len, d, h, dh);
        double* w = weights->data() + (b * heads + h) * seq_len * seq_len;
        std::memcpy(w, pos_scores.data() + h * seq_len * seq_len,
                    seq_len * seq_len * sizeof(double));
        K.matmul_nt_acc(qs.data(), ks.data(), w, seq_len, dh, seq_len);
        K.scale(w, scale, w, seq_len * seq_len);
        causal_softmax(w, seq_len);
        K.matmul(w, vs.data(), zo.data(), seq_len, seq_len, dh);
        for (std::size_t i = 0; i < seq_len; ++i)
          std::memcpy(out.data() + (base + i) * d + h * dh, zo.data() + i * dh,
                      dh * sizeof(double));
      }
    }
  }

  if (needs) {
    Tape::active()->record([q, k, v, pos_q, pos_k, out, weights, dims]() mutable {
      const auto& K2 = kernels::active();
      const std::size_t seq = dims.seq, dh = dims.dh, d = dims.d;
      std::vector<double> qs(seq * dh), ks(seq * dh), vs(seq * dh), dz(seq * dh);
      std::vector<double> dw(seq * seq), ds(seq * seq), tmp(seq * dh);
      std::vector<double> dpos(dims.heads * seq * seq, 0.0);
      for (std::size_t b = 0; b < dims.batch; ++b) {
        const std::size_t base = b * seq;
        for (std::size_t h = 0; h < dims.heads; ++h) {
          const double* w = weights->data() + (b * dims.heads + h) * seq * seq;
          gather_head(out.grad(), dz.data(), base, seq, d, h, dh);
          gather_head(v.data(), vs.data(), base, seq, d, h, dh);
          // dW = dZ * V^T, dV += W^T * dZ
          std::fill(dw.begin(), dw.end(), 0.0);
          K2.matmul_nt_acc(dz.data(), vs.data(), dw.data(), seq, dh, seq);
          if (v.requires_grad()) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            K2.matmul_tn_acc(w, dz.data(), tmp.data(), seq, seq, dh);
            scatter_head_acc(tmp.data(), v.grad(), base, seq, d, h, dh);
          }
          // Softmax backward on the causal prefix, then the score scale.
          for (std::size_t i = 0; i < seq; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) dot += dw[i * seq + j] * w[i * seq + j];
            for (std::size_t j = 0; j <= i; ++j)
              ds[i * seq + j] = w[i * seq + j] * (dw[i * seq + j] - dot) * dims.scale;
            for (std::size_t j = i + 1; j < seq; ++j) ds[i * seq + j] = 0.0;
          }
          gather_head(q.data(), qs.data(), base, seq, d, h, dh);
          gather_head(k.data(), ks.data(), base, seq, d, h, dh);
          if (q.requires_grad()) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            K2.matmul_acc(ds.data(), ks.data(), tmp.data(), seq, seq, dh);
            scatter_head_acc(tmp.data(), q.grad(), base, seq, d, h, dh);
          }
          if (k.requires_grad()) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            K2.matmul_tn_acc(ds.data(), qs.data(), tmp.data(), seq, seq, dh);
            scatter_head_acc(tmp.data(), k.grad(), base, seq, d, h, dh);
          }
          K2.axpy(1.0, ds.data(), dpos.data() + h * seq * seq, seq * seq);
        }
      }
      if (pos_q.requires_grad() || pos_k.requires_grad()) {
        std::vector<double> pq(seq * dh), pk(seq * dh), dtmp(seq * dh);
        for (std::size_t h = 0; h < dims.heads; ++h) {
          const double* dp = dpos.data() + h * seq * seq;
          gather_head(pos_q.data(), pq.data(), 0, seq, d, h, dh);
          gather_head(pos_k.data(), pk.data(), 0, seq, d, h, dh);
          if (pos_q.requires_grad()) {
            std::fill(dtmp.begin(), dtmp.end(), 0.0);
            K2.matmul_acc(dp, pk.data(), dtmp.data(), seq, seq, dh);
            scatter_head_acc(dtmp.data(), pos_q.grad(), 0, seq, d, h, dh);
          }
          if (pos_k.requires_grad()) {
            std::fill(dtmp.begin(), dtmp.end(), 0.0);
            K2.matmul_tn_acc(dp, pq.data(), dtmp.data(), seq, seq, dh);
            scatter_head_acc(dtmp.data(), pos_k.grad(), 0, seq, d, h, dh);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace lmqst
