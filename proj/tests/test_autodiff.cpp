#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "ppd/graph.hpp"
#include "ppd/optimizer.hpp"
#include "ppd/rng.hpp"

using namespace ppd;

namespace {

Tensor positive_random(std::vector<int64_t> shape, Rng& rng) {
  Tensor t = Tensor::random_normal(std::move(shape), rng);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = std::abs(t[i]) + 0.5;
  return t;
}

using Builder = std::function<NodeId(Graph&, const ParamStore&)>;

// loss = sum(op(params...) * weights): every output element gets a distinct
// upstream gradient. Returns worst per-tensor relative error between
// backward() and the central-difference oracle.
double oracle_error(const Builder& build, const ParamStore& params, Rng& rng) {
  Graph probe;
  const NodeId out = build(probe, params);
  const Tensor weights = Tensor::random_normal(probe.shape(out), rng);

  auto loss_value = [&](const ParamStore& p) {
    Graph g;
    NodeId o = build(g, p);
    g.set_root(g.sum(g.mul(o, g.constant(weights))));
    return g.evaluate(p).item();
  };

  Graph g;
  NodeId o = build(g, params);
  g.set_root(g.sum(g.mul(o, g.constant(weights))));
  g.evaluate(params);
  const ParamStore ad = g.backward();
  const ParamStore fd = finite_difference_gradient(loss_value, params, 1e-5);
  return gradient_relative_error(ad, fd);
}

double oracle_error_for_kind(OpKind kind, Rng& rng) {
  ParamStore params;
  const std::vector<int64_t> shape = {2, 3};
  switch (kind) {
    case OpKind::attention:
      params.add("q", Tensor::random_normal({2, 3}, rng));
      params.add("k", Tensor::random_normal({4, 3}, rng));
      params.add("v", Tensor::random_normal({4, 2}, rng));
      break;
    case OpKind::matmul: {
      const int64_t m = 2 + rng.uniform_int(0, 2);
      const int64_t inner = 2 + rng.uniform_int(0, 2);
      const int64_t p = 2 + rng.uniform_int(0, 2);
      params.add("a", Tensor::random_normal({m, inner}, rng));
      params.add("b", Tensor::random_normal({inner, p}, rng));
      break;
    }
    case OpKind::log_e:
      params.add("a", positive_random(shape, rng));
      break;
    case OpKind::concat:
      params.add("a", Tensor::random_normal({3}, rng));
      params.add("b", Tensor::random_normal({2}, rng));
      break;
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::squared_error:
      params.add("a", Tensor::random_normal(shape, rng));
      params.add("b", Tensor::random_normal(shape, rng));
      break;
    default:
      params.add("a", Tensor::random_normal(shape, rng));
      break;
  }

  Builder build = [kind](Graph& g, const ParamStore& store) -> NodeId {
    switch (kind) {
      case OpKind::add: return g.add(g.param(store, "a"), g.param(store, "b"));
      case OpKind::sub: return g.sub(g.param(store, "a"), g.param(store, "b"));
      case OpKind::mul: return g.mul(g.param(store, "a"), g.param(store, "b"));
      case OpKind::scale_by: return g.scale(g.param(store, "a"), 1.7);
      case OpKind::matmul: return g.matmul(g.param(store, "a"), g.param(store, "b"));
      case OpKind::softmax: return g.softmax(g.param(store, "a"));
      case OpKind::attention:
        return g.attention(g.param(store, "q"), g.param(store, "k"), g.param(store, "v"));
      case OpKind::layer_norm: return g.layer_norm(g.param(store, "a"));
      case OpKind::tanh_act: return g.tanh(g.param(store, "a"));
      case OpKind::sum_all: return g.sum(g.param(store, "a"));
      case OpKind::mean_all: return g.mean(g.param(store, "a"));
      case OpKind::squared_error:
        return g.squared_error(g.param(store, "a"), g.param(store, "b"));
      case OpKind::logistic: return g.logistic(g.param(store, "a"));
      case OpKind::log_e: return g.log(g.param(store, "a"));
      case OpKind::softplus: return g.softplus(g.param(store, "a"));
      case OpKind::concat: return g.concat({g.param(store, "a"), g.param(store, "b")});
      default: FAIL("unsupported kind in oracle test"); return -1;
    }
  };

  return oracle_error(build, params, rng);
}

NodeId mlp3(Graph& g, const ParamStore& p, NodeId x) {
  NodeId h1 = g.tanh(g.add(g.matmul(x, g.param(p, "w1")), g.param(p, "b1")));
  NodeId h2 = g.tanh(g.add(g.matmul(h1, g.param(p, "w2")), g.param(p, "b2")));
  return g.add(g.matmul(h2, g.param(p, "w3")), g.param(p, "b3"));
}

ParamStore mlp3_params(Rng& rng) {
  ParamStore p;
  p.add("w1", Tensor::random_normal({4, 6}, rng, 0.5));
  p.add("b1", Tensor::random_normal({1, 6}, rng, 0.1));
  p.add("w2", Tensor::random_normal({6, 6}, rng, 0.5));
  p.add("b2", Tensor::random_normal({1, 6}, rng, 0.1));
  p.add("w3", Tensor::random_normal({6, 2}, rng, 0.5));
  p.add("b3", Tensor::random_normal({1, 2}, rng, 0.1));
  return p;
}

}  // namespace

TEST_CASE("square function value and gradient") {
  ParamStore params;
  params.add("x", Tensor::scalar(3.0));
  Graph g;
  NodeId x = g.param(params, "x");
  g.set_root(g.mul(x, x));
  CHECK(g.evaluate(params).item() == doctest::Approx(9.0).epsilon(1e-12));
  ParamStore grads = g.backward();
  CHECK(grads.at("x").item() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
  ParamStore empty;
  Graph g;
  NodeId s = g.softmax(g.constant(Tensor::from({2}, {0.0, 0.0})));
  g.set_root(s);
  const Tensor& out = g.evaluate(empty);
  CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Graph h;
    NodeId sm = h.softmax(h.constant(Tensor::random_normal({3, 5}, rng, 4.0)));
    h.set_root(h.sum(sm));
    h.evaluate(empty);
    const Tensor& y = h.value(sm);
    for (int64_t r = 0; r < 3; ++r) {
      double rowsum = 0.0;
      for (int64_t c = 0; c < 5; ++c) {
        CHECK(y.at(r, c) >= 0.0);
        rowsum += y.at(r, c);
      }
      CHECK(std::abs(rowsum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("attention with a single key returns the value row") {
  ParamStore empty;
  Rng rng(11);
  Graph g;
  NodeId q = g.constant(Tensor::random_normal({1, 4}, rng));
  NodeId k = g.constant(Tensor::random_normal({1, 4}, rng));
  Tensor vrow = Tensor::random_normal({1, 3}, rng);
  NodeId v = g.constant(vrow);
  NodeId attn = g.attention(q, k, v);
  g.set_root(g.sum(attn));
  g.evaluate(empty);
  const Tensor& out = g.value(attn);
  // softmax over a singleton is exactly 1, so the output is V itself
  for (int64_t i = 0; i < 3; ++i) CHECK(out[i] == vrow[i]);
}

TEST_CASE("matmul-sum gradient has the outer-product structure") {
  Rng rng(3);
  ParamStore params;
  params.add("w", Tensor::random_normal({3, 2}, rng));
  Tensor vvec = Tensor::random_normal({2, 1}, rng);

  Graph g;
  g.set_root(g.sum(g.matmul(g.param(params, "w"), g.constant(vvec))));
  g.evaluate(params);
  ParamStore grads = g.backward();
  // d/dW sum(W v) = 1 * v^T broadcast over rows
  for (int64_t r = 0; r < 3; ++r) {
    for (int64_t c = 0; c < 2; ++c) {
      CHECK(grads.at("w").at(r, c) == doctest::Approx(vvec[c]).epsilon(1e-12));
    }
  }

  auto loss = [&](const ParamStore& p) {
    Graph h;
    h.set_root(h.sum(h.matmul(h.param(p, "w"), h.constant(vvec))));
    return h.evaluate(p).item();
  };
  ParamStore fd = finite_difference_gradient(loss, params);
  CHECK(gradient_relative_error(grads, fd) < 1e-6);
}

TEST_CASE("every op kind matches the finite-difference oracle on 100 random instances") {
  const OpKind kinds[] = {
      OpKind::add,        OpKind::sub,      OpKind::mul,      OpKind::scale_by,
      OpKind::matmul,     OpKind::softmax,  OpKind::attention, OpKind::layer_norm,
      OpKind::tanh_act,   OpKind::sum_all,  OpKind::mean_all, OpKind::squared_error,
      OpKind::logistic,   OpKind::log_e,    OpKind::softplus, OpKind::concat,
  };
  Rng rng(2024);
  for (OpKind kind : kinds) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, oracle_error_for_kind(kind, rng));
    INFO("op kind ", op_name(kind));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("attention gradient w.r.t. the query projection matches finite differences") {
  Rng rng(5);
  ParamStore params;
  params.add("wq", Tensor::random_normal({6, 4}, rng, 0.5));
  Tensor z = Tensor::random_normal({2, 6}, rng);
  Tensor keys = Tensor::random_normal({3, 4}, rng);
  Tensor vals = Tensor::random_normal({3, 5}, rng);

  auto build = [&](Graph& g, const ParamStore& p) {
    NodeId q = g.matmul(g.constant(z), g.param(p, "wq"));
    return g.sum(g.attention(q, g.constant(keys), g.constant(vals)));
  };
  Graph g;
  g.set_root(build(g, params));
  g.evaluate(params);
  ParamStore ad = g.backward();
  auto loss = [&](const ParamStore& p) {
    Graph h;
    h.set_root(build(h, p));
    return h.evaluate(p).item();
  };
  ParamStore fd = finite_difference_gradient(loss, params);
  CHECK(gradient_relative_error(ad, fd) < 1e-4);
}

TEST_CASE("three-layer MLP backward matches finite differences") {
  Rng rng(17);
  ParamStore params = mlp3_params(rng);
  Tensor x = Tensor::random_normal({1, 4}, rng);
  Tensor target = Tensor::random_normal({1, 2}, rng);

  auto build = [&](Graph& g, const ParamStore& p) {
    return g.squared_error(mlp3(g, p, g.constant(x)), g.constant(target));
  };
  Graph g;
  g.set_root(build(g, params));
  g.evaluate(params);
  ParamStore ad = g.backward();
  auto loss = [&](const ParamStore& p) {
    Graph h;
    h.set_root(build(h, p));
    return h.evaluate(p).item();
  };
  ParamStore fd = finite_difference_gradient(loss, params);
  CHECK(gradient_relative_error(ad, fd) < 1e-4);
}

TEST_CASE("finite differences reproduce known derivatives") {
  ParamStore params;
  params.add("x", Tensor::scalar(3.0));
  auto square = [](const ParamStore& p) { return p.at("x").item() * p.at("x").item(); };
  ParamStore g1 = finite_difference_gradient(square, params, 1e-4);
  CHECK(g1.at("x").item() == doctest::Approx(6.0).epsilon(1e-6));

  ParamStore at_zero;
  at_zero.add("x", Tensor::scalar(0.0));
  auto sigmoid = [](const ParamStore& p) { return logistic_value(p.at("x").item()); };
  ParamStore g2 = finite_difference_gradient(sigmoid, at_zero, 1e-4);
  CHECK(g2.at("x").item() == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("finite differences reject a non-deterministic loss") {
  ParamStore params;
  params.add("x", Tensor::scalar(1.0));
  int calls = 0;
  auto noisy = [&calls](const ParamStore& p) {
    return p.at("x").item() + 0.001 * static_cast<double>(calls++);
  };
  CHECK_THROWS_AS(finite_difference_gradient(noisy, params), Error);
}

TEST_CASE("evaluate is deterministic bit for bit") {
  Rng rng(19);
  ParamStore params = mlp3_params(rng);
  Tensor x = Tensor::random_normal({1, 4}, rng);
  auto run = [&]() {
    Graph g;
    NodeId out = mlp3(g, params, g.constant(x));
    g.set_root(g.sum(g.softmax(g.layer_norm(out))));
    return g.evaluate(params);
  };
  Tensor a = run();
  Tensor b = run();
  CHECK(bit_identical(a, b));
}

TEST_CASE("non-trainable parameters receive no gradient entry") {
  ParamStore params;
  params.add("w", Tensor::scalar(2.0), /*trainable=*/true);
  params.add("frozen", Tensor::scalar(5.0), /*trainable=*/false);
  Graph g;
  g.set_root(g.mul(g.param(params, "w"), g.param(params, "frozen")));
  g.evaluate(params);
  ParamStore grads = g.backward();
  CHECK(grads.contains("w"));
  CHECK_FALSE(grads.contains("frozen"));
  CHECK(grads.at("w").item() == doctest::Approx(5.0));
}

TEST_CASE("graph error paths") {
  ParamStore params;
  params.add("x", Tensor::from({2}, {1.0, 2.0}));

  SUBCASE("backward before evaluate") {
    Graph g;
    g.set_root(g.sum(g.param(params, "x")));
    CHECK_THROWS_AS(g.backward(), Error);
  }
  SUBCASE("root must be scalar") {
    Graph g;
    g.set_root(g.param(params, "x"));
    g.evaluate(params);
    try {
      g.backward();
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::shape_mismatch);
    }
  }
  SUBCASE("shape mismatch names the node") {
    Graph g;
    NodeId a = g.constant(Tensor::zeros({2, 3}));
    NodeId b = g.constant(Tensor::zeros({3, 3}));
    try {
      g.add(a, b);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::shape_mismatch);
      CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
  }
  SUBCASE("non-finite intermediate is reported") {
    Graph g;
    g.set_root(g.sum(g.log(g.constant(Tensor::from({2}, {1.0, -1.0})))));
    try {
      g.evaluate(params);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::non_finite);
    }
  }
}

TEST_CASE("adamw first step with unit gradient moves by about -lr") {
  ParamStore params;
  params.add("w", Tensor::scalar(1.0));
  ParamStore grads;
  grads.add("w", Tensor::scalar(1.0));
  AdamWState state;
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  adamw_step(params, grads, state, cfg);
  // bias-corrected mhat = 1, vhat = 1 -> delta = -lr / (1 + eps)
  CHECK(params.at("w").item() == doctest::Approx(1.0 - 1e-3).epsilon(1e-7));
  CHECK(state.step == 1);
}

TEST_CASE("adamw leaves parameters alone when gradient is zero") {
  ParamStore params;
  params.add("w", Tensor::scalar(1.5));
  ParamStore grads;
  grads.add("w", Tensor::scalar(0.0));
  AdamWState state;
  AdamWConfig cfg;
  adamw_step(params, grads, state, cfg);
  CHECK(params.at("w").item() == 1.5);
}

TEST_CASE("adamw never updates frozen parameters") {
  ParamStore params;
  params.add("w", Tensor::scalar(2.0), /*trainable=*/false);
  ParamStore grads;
  grads.add("w", Tensor::scalar(10.0));
  AdamWState state;
  AdamWConfig cfg;
  adamw_step(params, grads, state, cfg);
  CHECK(params.at("w").item() == 2.0);
}

TEST_CASE("adamw rejects bad inputs") {
  ParamStore params;
  params.add("w", Tensor::scalar(1.0));
  ParamStore grads;
  grads.add("w", Tensor::from({2}, {1.0, 1.0}));
  AdamWState state;
  AdamWConfig cfg;
  SUBCASE("negative lr") {
    cfg.lr = -1.0;
    CHECK_THROWS_AS(adamw_step(params, grads, state, cfg), Error);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(adamw_step(params, grads, state, cfg), Error);
  }
}
