#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "lmqst/tensor.hpp"

using lmqst::RngStream;
using lmqst::Tape;
using lmqst::Tensor;

namespace {

// Checks every parameter gradient against a central finite difference of the
// scalar loss. `build` must be deterministic and must read the parameter
// tensors it was handed (shallow handles, so perturbations are visible).
void check_gradients(std::vector<Tensor> params, const std::function<Tensor()>& build,
                     double eps = 1e-6, double tol = 1e-4) {
  std::vector<std::vector<double>> grads;
  {
    Tape tape;
    Tensor loss = build();
    tape.backward(loss);
    for (auto& p : params) grads.push_back(p.grad_values());
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = build().item();
      p.data()[i] = saved - eps;
      const double dn = build().item();
      p.data()[i] = saved;
      const double fd = (up - dn) / (2.0 * eps);
      const double ad = grads[pi][i];
      const double denom = std::max({1e-6, std::abs(fd), std::abs(ad)});
      INFO("param ", pi, " index ", i, " ad=", ad, " fd=", fd);
      CHECK(std::abs(ad - fd) / denom < tol);
    }
  }
}

RngStream make_rng(std::uint64_t seed) { return RngStream(seed); }

Tensor rand_tensor(std::vector<std::size_t> shape, RngStream& rng, bool grad = true) {
  return Tensor::randn(std::move(shape), rng, 0.7, grad);
}

}  // namespace

TEST_CASE("shared subexpression x*x + x has gradient 2x+1") {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = make_rng(100 + trial);
    Tensor x = rand_tensor({5}, rng);
    Tape tape;
    Tensor loss = lmqst::sum_all(lmqst::add(lmqst::mul(x, x), x));
    tape.backward(loss);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x.at(i) + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("matmul chain gradient matches finite differences") {
  for (int trial = 0; trial < 12; ++trial) {
    auto rng = make_rng(200 + trial);
    Tensor a = rand_tensor({3, 4}, rng);
    Tensor b = rand_tensor({4, 5}, rng);
    Tensor bias = rand_tensor({5}, rng);
    Tensor w = rand_tensor({3, 5}, rng, false);
    check_gradients({a, b, bias}, [&]() {
      Tensor h = lmqst::relu(lmqst::add_bias_rows(lmqst::matmul(a, b), bias));
      return lmqst::sum_all(lmqst::mul(h, w));
    });
  }
}

TEST_CASE("matmul_transb gradient matches finite differences") {
  for (int trial = 0; trial < 12; ++trial) {
    auto rng = make_rng(300 + trial);
    Tensor a = rand_tensor({4, 6}, rng);
    Tensor b = rand_tensor({3, 6}, rng);
    Tensor w = rand_tensor({4, 3}, rng, false);
    check_gradients({a, b}, [&]() {
      return lmqst::sum_all(lmqst::mul(lmqst::matmul_transb(a, b), w));
    });
  }
}

TEST_CASE("scale, log and sum gradients match finite differences") {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = make_rng(400 + trial);
    Tensor x = rand_tensor({7}, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = std::abs(x.at(i)) + 0.5;
    check_gradients({x}, [&]() { return lmqst::sum_all(lmqst::log_elem(lmqst::scale(x, 1.7))); });
  }
}

TEST_CASE("softmax_rows gradient matches finite differences") {
  for (int trial = 0; trial < 12; ++trial) {
    auto rng = make_rng(500 + trial);
    Tensor x = rand_tensor({4, 6}, rng);
    Tensor w = rand_tensor({4, 6}, rng, false);
    check_gradients({x}, [&]() {
      Tensor y = lmqst::softmax_rows(x);
      return lmqst::sum_all(lmqst::mul(y, w));
    });
  }
}

TEST_CASE("masked softmax zeroes masked entries exactly and backprops") {
  auto rng = make_rng(600);
  Tensor x = rand_tensor({3, 3}, rng);
  const double ninf = -std::numeric_limits<double>::infinity();
  Tensor mask = Tensor::from_vector({3, 3}, {0, ninf, ninf, 0, 0, ninf, 0, 0, 0});
  Tensor w = rand_tensor({3, 3}, rng, false);
  {
    Tensor y = lmqst::softmax_rows(x, &mask);
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 0.0);
    CHECK(y.at(0, 2) == 0.0);
    CHECK(y.at(1, 2) == 0.0);
    CHECK(y.at(1, 0) + y.at(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  }
  check_gradients({x}, [&]() {
    return lmqst::sum_all(lmqst::mul(lmqst::softmax_rows(x, &mask), w));
  });
}

TEST_CASE("fully masked row throws") {
  Tensor x = Tensor::from_vector({1, 2}, {0.3, -0.2});
  const double ninf = -std::numeric_limits<double>::infinity();
  Tensor mask = Tensor::from_vector({1, 2}, {ninf, ninf});
  CHECK_THROWS_AS((void)lmqst::softmax_rows(x, &mask), std::runtime_error);
}

TEST_CASE("log_softmax rows sum to one in probability space") {
  auto rng = make_rng(700);
  Tensor x = rand_tensor({5, 9}, rng, false);
  Tensor y = lmqst::log_softmax_rows(x);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) s += std::exp(y.at(i, j));
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("log_softmax gradient matches finite differences") {
  for (int trial = 0; trial < 12; ++trial) {
    auto rng = make_rng(800 + trial);
    Tensor x = rand_tensor({3, 7}, rng);
    Tensor w = rand_tensor({3, 7}, rng, false);
    check_gradients({x}, [&]() {
      return lmqst::sum_all(lmqst::mul(lmqst::log_softmax_rows(x), w));
    });
  }
}

TEST_CASE("embedding gather accumulates over repeated ids") {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = make_rng(900 + trial);
    Tensor table = rand_tensor({6, 4}, rng);
    std::vector<int> ids = {2, 0, 2, 5, 2};
    Tensor w = rand_tensor({ids.size(), 4}, rng, false);
    check_gradients({table}, [&]() {
      return lmqst::sum_all(lmqst::mul(lmqst::embedding_gather(table, ids), w));
    });
  }
}

TEST_CASE("concat and slice gradients match finite differences") {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = make_rng(1000 + trial);
    Tensor a = rand_tensor({3, 2}, rng);
    Tensor b = rand_tensor({3, 4}, rng);
    Tensor w = rand_tensor({3, 3}, rng, false);
    check_gradients({a, b}, [&]() {
      Tensor cat = lmqst::concat_cols(a, b);
      return lmqst::sum_all(lmqst::mul(lmqst::slice_cols(cat, 1, 4), w));
    });
  }
}

TEST_CASE("picked_nll gradient matches finite differences") {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = make_rng(1100 + trial);
    Tensor logits = rand_tensor({6, 5}, rng);
    std::vector<int> targets = {0, 3, 4, 1, 2, 2};
    std::vector<unsigned char> active = {1, 1, 0, 1, 1, 0};
    check_gradients({logits}, [&]() {
      return lmqst::picked_nll(lmqst::log_softmax_rows(logits), targets, active, 3.0);
    });
  }
}

TEST_CASE("causal attention gradient matches finite differences") {
  for (int trial = 0; trial < 6; ++trial) {
    auto rng = make_rng(1200 + trial);
    const std::size_t batch = 2, seq = 3, heads = 2, d = 4;
    Tensor q = rand_tensor({batch * seq, d}, rng);
    Tensor k = rand_tensor({batch * seq, d}, rng);
    Tensor v = rand_tensor({batch * seq, d}, rng);
    Tensor pq = rand_tensor({seq, d}, rng);
    Tensor pk = rand_tensor({seq, d}, rng);
    Tensor w = rand_tensor({batch * seq, d}, rng, false);
    check_gradients({q, k, v, pq, pk}, [&]() {
      Tensor z = lmqst::masked_causal_attention(q, k, v, pq, pk, batch, seq, heads,
                                                1.0 / std::sqrt(2.0 * d));
      return lmqst::sum_all(lmqst::mul(z, w));
    });
  }
}

TEST_CASE("causal attention ignores future positions") {
  auto rng = make_rng(1300);
  const std::size_t batch = 1, seq = 5, heads = 2, d = 6;
  Tensor q = rand_tensor({seq, d}, rng, false);
  Tensor k = rand_tensor({seq, d}, rng, false);
  Tensor v = rand_tensor({seq, d}, rng, false);
  Tensor pq = rand_tensor({seq, d}, rng, false);
  Tensor pk = rand_tensor({seq, d}, rng, false);
  Tensor base = lmqst::masked_causal_attention(q, k, v, pq, pk, batch, seq, heads, 0.3);
  // Perturbing position t must leave rows < t bit-identical.
  for (std::size_t t = 1; t < seq; ++t) {
    Tensor q2 = Tensor::from_vector(q.shape(), q.values());
    Tensor k2 = Tensor::from_vector(k.shape(), k.values());
    Tensor v2 = Tensor::from_vector(v.shape(), v.values());
    for (std::size_t c = 0; c < d; ++c) {
      q2.data()[t * d + c] += 7.0;
      k2.data()[t * d + c] -= 3.0;
      v2.data()[t * d + c] += 11.0;
    }
    Tensor out = lmqst::masked_causal_attention(q2, k2, v2, pq, pk, batch, seq, heads, 0.3);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t c = 0; c < d; ++c) CHECK(out.at(r, c) == base.at(r, c));
  }
}

TEST_CASE("tape rejects double backward and nested tapes") {
  Tensor x = Tensor::from_vector({2}, {1.0, 2.0}, true);
  Tape tape;
  CHECK_THROWS_AS(Tape(), std::logic_error);
  Tensor loss = lmqst::sum_all(lmqst::mul(x, x));
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("ops outside a tape do not record or allocate gradients") {
  Tensor x = Tensor::from_vector({2, 2}, {1, 2, 3, 4}, true);
  Tensor y = lmqst::matmul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.at(0, 0) == 7.0);
  CHECK(y.at(1, 1) == 22.0);
}
