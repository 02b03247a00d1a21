#include <cmath>
#include <vector>

#include "doctest.h"
#include "trb/ops.hpp"
#include "trb/tensor.hpp"

using namespace trb;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape product and construction") {
  Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  TensorF t = TensorF::zeros(s);
  CHECK(t.numel() == 120);
  CHECK(t.shape() == s);
  CHECK_THROWS_AS(TensorF::from(s, std::vector<float>(7)), ShapeError);
}

TEST_CASE("grad buffer matches shape and clears") {
  TensorF t = TensorF::full(Shape{1, 2, 2, 2}, 1.5f, true);
  CHECK(!t.has_grad());
  t.grad()[3] = 2.0f;
  CHECK(t.has_grad());
  CHECK(t.grad_values().size() == t.numel());
  t.zero_grad();
  CHECK(!t.has_grad());
}

TEST_CASE("backward of x^2 at x=3 gives 6") {
  TapeF tape;
  TensorF x = TensorF::scalar(3.0f, true);
  TensorF loss = mse_sum(tape, x, TensorF::scalar(0.0f));
  CHECK(loss.item() == doctest::Approx(9.0f));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0f));
}

TEST_CASE("two backward calls double leaf grads exactly") {
  TapeF tape;
  Rng rng(5);
  TensorF x = TensorF::randn(Shape{1, 2, 3, 3}, rng, 1.0f, true);
  ConvParams<float> p = ConvParams<float>::he_init(2, 2, 3, 3, rng);
  TensorF y = conv2d(tape, x, p);
  TensorF s = sigmoid(tape, y);
  TensorF loss = mse_sum(tape, s, TensorF::zeros(s.shape()));
  tape.backward(loss);
  std::vector<float> g1 = x.grad_values();
  std::vector<float> w1 = p.weight.grad_values();
  tape.backward(loss);
  for (size_t i = 0; i < g1.size(); ++i) CHECK(x.grad()[i] == 2.0f * g1[i]);
  for (size_t i = 0; i < w1.size(); ++i) CHECK(p.weight.grad()[i] == 2.0f * w1[i]);
}

TEST_CASE("non-scalar loss is rejected") {
  TapeF tape;
  TensorF x = TensorF::full(Shape{1, 1, 2, 2}, 1.0f, true);
  TensorF y = relu(tape, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("tape replays in reverse exactly once") {
  // y = x * x ; two records (mul). After backward, grad = 2x. A second
  // identical graph on a fresh tape gives the same result.
  for (int trial = 0; trial < 2; ++trial) {
    TapeF tape;
    TensorF x = TensorF::scalar(4.0f, true);
    TensorF y = mul(tape, x, x);
    CHECK(tape.size() == 1);
    tape.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(8.0f));
  }
}

TEST_CASE("finite checks trip on NaN when enabled") {
  set_finite_checks(true);
  TapeF tape;
  TensorF x = TensorF::full(Shape{1, 1, 1, 2}, 0.0f);
  x.data()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS(add(tape, x, x));
  set_finite_checks(false);
  CHECK_NOTHROW(add(tape, x, x));
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  auto run = [](std::vector<float>& out) {
    Rng rng(31);
    TapeF tape;
    TensorF x = TensorF::randn(Shape{2, 3, 8, 8}, rng, 1.0f, true);
    ConvParams<float> p = ConvParams<float>::he_init(4, 3, 3, 3, rng);
    TensorF y = conv2d(tape, x, p, 1);
    TensorF s = sigmoid(tape, y);
    out = s.values();
  };
  std::vector<float> a, b;
  run(a);
  run(b);
  CHECK(a == b);
}

TEST_SUITE_END();
