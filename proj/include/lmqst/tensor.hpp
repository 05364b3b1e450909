#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lmqst/rng.hpp"

namespace lmqst {

/// Dense row-major double tensor with an optional gradient accumulator.
/// Copies are shallow: two Tensor handles may alias the same storage, which
/// is what the tape relies on to route gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor from_vector(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<std::size_t> shape, RngStream& rng, double stddev,
                      bool requires_grad = false);

  bool valid() const { return s_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return s_->shape; }
  std::size_t size() const { return s_->data.size(); }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return s_->data.data(); }
  const double* data() const { return s_->data.data(); }
  std::vector<double>& values() { return s_->data; }
  const std::vector<double>& values() const { return s_->data; }

  bool requires_grad() const { return s_->requires_grad; }
  double* grad();
  const double* grad() const;
  std::vector<double>& grad_values();
  void zero_grad();

  double item() const;
  double at(std::size_t i) const { return s_->data[i]; }
  double at(std::size_t i, std::size_t j) const { return s_->data[i * cols() + j]; }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // non-empty iff requires_grad
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Reverse-mode tape. Ops append nodes in construction order, so the list is
/// already topologically sorted; backward replays it once in reverse. One
/// tape is active per thread at a time.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded node once, newest
  /// first. The loss must be a scalar produced under this tape.
  void backward(Tensor loss);

  std::size_t size() const { return nodes_.size(); }

  static Tape* active();
  void record(std::function<void()> node) { nodes_.push_back(std::move(node)); }

 private:
  std::vector<std::function<void()>> nodes_;
  bool used_ = false;
};

// --- primitive ops ---------------------------------------------------------

Tensor matmul(Tensor a, Tensor b);
// a(m x k) * b(n x k)^T -> (m x n); used for the tied output projection.
Tensor matmul_transb(Tensor a, Tensor b);
Tensor add(Tensor a, Tensor b);
// a(r x c) + bias(c) broadcast over rows.
Tensor add_bias_rows(Tensor a, Tensor bias);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor a, double s);
Tensor relu(Tensor a);
Tensor log_elem(Tensor a);
Tensor sum_all(Tensor a);

/// Row softmax with optional additive mask whose entries are 0 or -inf.
/// Masked entries come out exactly 0. A fully masked row is an error.
Tensor softmax_rows(Tensor a, const Tensor* mask = nullptr);
Tensor log_softmax_rows(Tensor a);

Tensor embedding_gather(Tensor table, const std::vector<int>& ids);
Tensor concat_cols(Tensor a, Tensor b);
Tensor slice_cols(Tensor a, std::size_t col_begin, std::size_t col_end);

/// -sum_{r in active} logp[r][targets[r]] / denom as a scalar.
Tensor picked_nll(Tensor log_probs, const std::vector<int>& targets,
                  const std::vector<unsigned char>& active, double denom);

/// Multi-head causal attention over `batch` packed sequences of length
/// `seq_len`. q,k,v are (batch*seq_len x d); pos_q,pos_k are (seq_len x d)
/// and shared across the batch. Per head, scores are
/// (q.k^T + pos_q.pos_k^T) * scale on the causal lower triangle, row-softmaxed
/// and applied to v; head outputs are concatenated (no output projection).
Tensor masked_causal_attention(Tensor q, Tensor k, Tensor v,
                               Tensor pos_q, Tensor pos_k,
                               std::size_t batch, std::size_t seq_len,
                               std::size_t heads, double scale);

}  // namespace lmqst
