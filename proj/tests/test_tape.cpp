#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "fd_cases.hpp"
#include "loant/tape.hpp"

using namespace loant;
using namespace loant::testing;

TEST_CASE("record: add, shape mismatch, softmax symmetry") {
  Tape t;
  const NodeId x = t.leaf(Tensor::vector({1, 2}));
  const NodeId y = t.leaf(Tensor::vector({10, 20}));
  const NodeId in[] = {x, y};
  CHECK(t.value(t.record(OpKind::kAdd, in)) == Tensor::vector({11, 22}));

  const NodeId a = t.leaf(Tensor({2, 3}));
  const NodeId b = t.leaf(Tensor({4, 2}));
  const NodeId mm[] = {a, b};
  CHECK_THROWS_AS(t.record(OpKind::kMatmul, mm), ShapeError);

  const NodeId z = t.leaf(Tensor::vector({0, 0}));
  const Tensor p = t.value(t.softmax(z));
  CHECK(p.data()[0] == 0.5);
  CHECK(p.data()[1] == 0.5);
}

TEST_CASE("record rejects unknown kinds, wrong arity and foreign nodes") {
  Tape t, other;
  const NodeId x = t.leaf(Tensor::vector({1}));
  const NodeId one[] = {x};
  CHECK_THROWS_AS(t.record(static_cast<OpKind>(200), one), Error);
  CHECK_THROWS_AS(t.record(OpKind::kAdd, one), Error);
  CHECK_THROWS_AS(t.record(OpKind::kLeaf, one), Error);
  const NodeId y = other.leaf(Tensor::vector({1}));
  CHECK_THROWS_AS(t.add(x, y), Error);
  CHECK_THROWS_AS(t.grad_reverse(x, -1.0), Error);
  CHECK_THROWS_AS(t.concat(x, x, 2), Error);
}

TEST_CASE("non-finite forward values are reported") {
  Tape t;
  const NodeId x = t.leaf(Tensor::vector({0.0, 1.0}));
  CHECK_THROWS_AS(t.log(x), NonFiniteError);
}

TEST_CASE("backward: x*x at 3 gives 6") {
  Tape t;
  const NodeId x = t.leaf(Tensor::scalar(3));
  const Gradients g = t.backward(t.mul(x, x));
  CHECK(g[x].item() == 6.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  const NodeId x = t.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(t.backward(x), Error);
}

TEST_CASE("softmax cross-entropy gradient is (softmax - y) / rows") {
  Tape t;
  const Tensor logits = Tensor::matrix(2, 3, {0.2, -1.0, 0.5, 2.0, 0.1, -0.3});
  auto y = std::make_shared<Tensor>(Tensor::matrix(2, 3, {0, 0, 1, 1, 0, 0}));
  const NodeId l = t.leaf(logits);
  const Gradients g = t.backward(t.softmax_cross_entropy(l, y));
  for (std::size_t r = 0; r < 2; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits.at(r, c));
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = (std::exp(logits.at(r, c)) / z - y->at(r, c)) / 2.0;
      CHECK(g[l].at(r, c) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
}

TEST_CASE("gradients at intermediate nodes") {
  Tape t;
  const NodeId x = t.leaf(Tensor::vector({0.3, -0.2}));
  const NodeId h = t.tanh(x);
  const NodeId loss = t.sum(t.mul(h, h));
  const Gradients g = t.backward(loss);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(g[h].data()[i] == doctest::Approx(2.0 * t.value(h).data()[i]));
}

TEST_CASE("restricted backward ignores paths that do not start at wrt") {
  Tape t;
  const NodeId a = t.leaf(Tensor::scalar(2));
  const NodeId b = t.leaf(Tensor::scalar(5));
  const NodeId loss = t.mul(a, b);
  const NodeId wrt[] = {a};
  const Gradients g = t.backward(loss, wrt);
  CHECK(g[a].item() == 5.0);
  CHECK_FALSE(g.has(b));
  CHECK(g[b].item() == 0.0);
}

TEST_CASE("finite_diff_check basics") {
  const auto sq = [](Tape& t, NodeId x) { return t.sum(t.mul(x, x)); };
  CHECK(finite_diff_check(sq, Tensor::vector({1, 2}), 1e-5) < 1e-8);
  CHECK_THROWS_AS(finite_diff_check(sq, Tensor::vector({1, 2}), 0.0), Error);
}

TEST_CASE("finite differences: 2-layer net cross-entropy and 3-layer MLP") {
  Rng rng(17);
  auto y = std::make_shared<Tensor>(Tensor::matrix(3, 2, {1, 0, 0, 1, 0, 1}));
  const GraphBuilder net2 = [y](Tape& t, std::span<const NodeId> w) {
    const NodeId x = t.constant(Tensor::matrix(3, 4, {0.1, 0.5, -0.3, 0.8, 1.0, -1.0, 0.2, 0.0,
                                                      0.3, 0.3, -0.7, 0.4}));
    const NodeId h = t.tanh(t.add(t.matmul(x, w[0]), w[1]));
    return t.softmax_cross_entropy(t.add(t.matmul(h, w[2]), w[3]), y);
  };
  CHECK(finite_diff_check(net2, draw_inputs(rng, {{4, 5}, {5}, {5, 2}, {2}}), 1e-5)
            .max_rel_error < 1e-5);

  const GraphBuilder mlp3 = [y](Tape& t, std::span<const NodeId> w) {
    const NodeId x = t.constant(Tensor::matrix(3, 2, {0.4, -0.1, 0.9, 0.2, -0.5, 0.7}));
    NodeId h = t.tanh(t.matmul(x, w[0]));
    h = t.tanh(t.matmul(h, w[1]));
    return t.softmax_cross_entropy(t.matmul(h, w[2]), y);
  };
  for (int trial = 0; trial < 10; ++trial)
    CHECK(finite_diff_check(mlp3, draw_inputs(rng, {{2, 6}, {6, 6}, {6, 2}}), 1e-6)
              .max_rel_error < 1e-5);
}

TEST_CASE("every differentiable op passes finite differences at 100 random points") {
  std::set<OpKind> covered;
  for (const FdCase& c : op_cases()) {
    CAPTURE(c.name);
    covered.insert(c.kind);
    Rng rng(stable_hash(c.name));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i)
      worst = std::max(worst, finite_diff_check(c.graph, c.point(rng), 1e-6).max_rel_error);
    CHECK(worst < 1e-5);
  }
  // Everything except leaves/constants and the two ops whose gradient is
  // deliberately not the derivative of their forward value.
  CHECK(covered.size() == static_cast<std::size_t>(kOpKindCount) - 4);
}

TEST_CASE("gradient reversal: identity forward, -lambda backward") {
  Tape t;
  const NodeId x = t.leaf(Tensor::scalar(3));
  const NodeId r = t.grad_reverse(x, 1.0);
  CHECK(t.value(r).item() == 3.0);
  CHECK(t.backward(t.mul(r, r))[x].item() == -6.0);

  Tape t0;
  const NodeId x0 = t0.leaf(Tensor::scalar(3));
  const NodeId r0 = t0.grad_reverse(x0, 0.0);
  CHECK(t0.backward(t0.mul(r0, r0))[x0].item() == 0.0);

  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Tensor point = random_tensor({2, 3}, rng);
    const double lambda = rng.uniform(0.0, 2.0);
    Tape a, b;
    const NodeId xa = a.leaf(point);
    const NodeId xb = b.leaf(point);
    const Tensor ga = a.backward(weighted_sum(a, a.tanh(a.grad_reverse(xa, lambda)), 1))[xa];
    const Tensor gb = b.backward(weighted_sum(b, b.tanh(xb), 1))[xb];
    for (std::size_t k = 0; k < ga.size(); ++k)
      CHECK(ga.data()[k] == doctest::Approx(-lambda * gb.data()[k]).epsilon(1e-14));
  }
}

TEST_CASE("detach: y = detach(x) * x at 3 has gradient 3") {
  Tape t;
  const NodeId x = t.leaf(Tensor::scalar(3));
  CHECK(t.backward(t.mul(t.detach(x), x))[x].item() == 3.0);
  const NodeId c = t.constant(Tensor::scalar(4));
  const NodeId loss = t.mul(t.detach(c), x);
  CHECK(t.backward(loss)[c].item() == 0.0);
}

TEST_CASE("detach equals replacing the subtree by a constant") {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const Tensor w = random_tensor({3, 3}, rng);
    const Tensor x = random_tensor({2, 3}, rng);
    Tape a, b;
    const NodeId wa = a.leaf(w), xa = a.leaf(x);
    const NodeId ha = a.detach(a.tanh(a.matmul(xa, wa)));
    const NodeId la = a.sum(a.mul(a.matmul(ha, wa), a.tanh(xa)));
    const NodeId wb = b.leaf(w), xb = b.leaf(x);
    const NodeId hb = b.constant(Tensor(b.value(b.tanh(b.matmul(xb, wb)))));
    const NodeId lb = b.sum(b.mul(b.matmul(hb, wb), b.tanh(xb)));
    const Gradients ga = a.backward(la), gb = b.backward(lb);
    CHECK(ga[wa] == gb[wb]);
    CHECK(ga[xa] == gb[xb]);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    const Tensor x0 = random_tensor({4}, rng);
    const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
    Tape t;
    const NodeId x = t.leaf(x0);
    const NodeId f = t.sum(t.tanh(t.mul(x, x)));
    const NodeId g = t.mean(t.softmax(x));
    const NodeId combo = t.add(t.scale(f, alpha), t.scale(g, beta));
    const Tensor gc = t.backward(combo)[x];
    const Tensor gf = t.backward(f)[x], gg = t.backward(g)[x];
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(std::abs(gc.data()[k] - (alpha * gf.data()[k] + beta * gg.data()[k])) < 1e-12);
  }
}

TEST_CASE("replaying a graph is bit-identical") {
  Rng rng(4);
  const std::vector<Tensor> point = draw_inputs(rng, {{3, 4}, {4, 2}});
  auto run = [&] {
    Tape t;
    const NodeId a = t.leaf(point[0]), b = t.leaf(point[1]);
    const NodeId loss = t.mean(t.softmax(t.matmul(t.tanh(a), b)));
    const Gradients g = t.backward(loss);
    return std::vector<Tensor>{t.value(loss), g[a], g[b]};
  };
  CHECK(run() == run());
}

TEST_CASE("embedding_mean rejects out-of-vocabulary ids and empty sequences") {
  Tape t;
  const NodeId table = t.leaf(Tensor({3, 2}));
  CHECK_THROWS_AS(t.embedding_mean(table, std::make_shared<TokenBatch>(TokenBatch{{0, 3}})),
                  Error);
}
