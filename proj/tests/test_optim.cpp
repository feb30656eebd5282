#include <cmath>

#include "doctest.h"
#include "fenlo/optim.hpp"
#include "fenlo/rng.hpp"
#include "fenlo/tensor.hpp"

using namespace fenlo;

TEST_CASE("param store: unique names, lexicographic order") {
  ParamStore store;
  store.add("b", {1}, {1.0});
  store.add("a", {2}, {2.0, 3.0});
  CHECK_THROWS_AS(store.add("a", {1}, {0.0}), std::invalid_argument);
  std::vector<std::string> names;
  for (const auto& [name, p] : store) names.push_back(name);
  CHECK(names == std::vector<std::string>{"a", "b"});
  CHECK(store.value_count() == 3);
  CHECK(store.contains("a"));
  CHECK(!store.contains("c"));
}

TEST_CASE("collect_grads: reachable params get gradients, others zero") {
  ParamStore store;
  store.add("used", {1}, {2.0});
  store.add("unused", {1}, {5.0});
  Tape tape;
  auto leaves = store.leaves(tape);
  tape.backward(square(leaves.at("used")));
  store.collect_grads(tape, leaves);
  CHECK(store.at("used").grad[0] == 4.0);
  CHECK(store.at("unused").grad[0] == 0.0);
}

TEST_CASE("adam: zero grad leaves params unchanged") {
  ParamStore store;
  store.add("w", {2}, {1.0, -1.0});
  store.zero_grads();
  AdamState st;
  adam_step(store, st);
  CHECK(store.at("w").value == std::vector<double>{1.0, -1.0});
  CHECK(st.t == 1);
}

TEST_CASE("adam: first step moves by about lr in the gradient direction") {
  ParamStore store;
  store.add("w", {1}, {1.0});
  store.at("w").grad = {1.0};
  AdamState st;
  st.lr = 0.1;
  adam_step(store, st);
  // Bias-corrected first step: m_hat = g, v_hat = g^2, update = lr*g/(|g|+eps).
  CHECK(store.at("w").value[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("adam: hand-unrolled two-step oracle") {
  ParamStore store;
  store.add("w", {1}, {0.5});
  AdamState st;
  st.lr = 0.01;
  double m = 0.0, v = 0.0, w = 0.5;
  for (int t = 1; t <= 2; ++t) {
    double g = 2.0 * w;  // d/dw w^2
    store.at("w").grad = {g};
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1.0 - std::pow(0.9, t));
    double vh = v / (1.0 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    adam_step(store, st);
    CHECK(store.at("w").value[0] == doctest::Approx(w).epsilon(1e-14));
  }
  CHECK(st.t == 2);
}

TEST_CASE("adam: v strictly increases under identical repeated grads") {
  ParamStore store;
  store.add("w", {1}, {1.0});
  AdamState st;
  store.at("w").grad = {0.3};
  adam_step(store, st);
  double v1 = st.v.at("w")[0];
  store.at("w").grad = {0.3};
  adam_step(store, st);
  CHECK(st.v.at("w")[0] > v1);
}

TEST_CASE("glorot bounds and spread") {
  Rng rng(11);
  auto w = glorot_uniform(100, 50, rng);
  double bound = std::sqrt(6.0 / 150.0);
  double mx = 0.0;
  for (double v : w) mx = std::max(mx, std::abs(v));
  CHECK(mx <= bound);
  CHECK(mx > 0.5 * bound);  // not degenerate
  CHECK(w.size() == 5000);
}

TEST_CASE("mlp init and forward") {
  ParamStore store;
  Rng rng(3);
  mlp_init(store, "net", {2, 4, 1}, rng);
  CHECK(store.contains("net.w0"));
  CHECK(store.contains("net.b0"));
  CHECK(store.contains("net.w1"));
  CHECK(store.contains("net.b1"));
  CHECK(store.at("net.w0").shape == std::vector<int>{2, 4});
  CHECK(store.at("net.b0").value == std::vector<double>(4, 0.0));

  // Hand-built identity-ish net: relu(x W0) W1 with known weights.
  ParamStore tiny;
  tiny.add("t.w0", {1, 2}, {1.0, -1.0});
  tiny.add("t.b0", {1, 2}, {0.0, 0.0});
  tiny.add("t.w1", {2, 1}, {1.0, 1.0});
  tiny.add("t.b1", {1, 1}, {0.5});
  Tape tape;
  auto leaves = tiny.leaves(tape);
  Tensor out = mlp_forward(leaves, "t", 2, make_tensor({2, 1}, {2.0, -3.0}));
  // x=2: relu([2,-2])=[2,0] -> 2+0.5 ; x=-3: relu([-3,3])=[0,3] -> 3+0.5
  CHECK(out.values() == std::vector<double>{2.5, 3.5});
}
