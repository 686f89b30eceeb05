#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "clqg/adam.hpp"
#include "clqg/ops.hpp"

using namespace clqg;

namespace {

Tensor<double> param(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor<double>::from_data({n}, std::move(values), true);
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  std::vector<Tensor<double>> params{param({1.5, -2.0, 0.25})};
  params[0].zero_grad();
  AdamState<double> state;
  for (int i = 0; i < 5; ++i) adam_step<double>(params, state, 1e-2);
  CHECK(params[0].data()[0] == 1.5);
  CHECK(params[0].data()[1] == -2.0);
  CHECK(params[0].data()[2] == 0.25);
}

TEST_CASE("first step moves each weight by about lr against the gradient sign") {
  std::vector<Tensor<double>> params{param({1.0, -1.0, 3.0})};
  const std::vector<double> grads{0.3, -7.0, 1e-3};
  for (std::size_t i = 0; i < 3; ++i) params[0].grad_mut()[i] = grads[i];
  AdamState<double> state;
  const double lr = 1e-3;
  adam_step<double>(params, state, lr);
  CHECK(std::abs((1.0 - params[0].data()[0]) - lr) < 0.01 * lr);
  CHECK(std::abs((params[0].data()[1] + 1.0) - lr) < 0.01 * lr);
  CHECK(std::abs((3.0 - params[0].data()[2]) - lr) < 0.01 * lr);
  CHECK(state.step_count == 1);
}

TEST_CASE("minimizing w^2 decreases the objective every step") {
  std::vector<Tensor<double>> params{param({2.0})};
  AdamState<double> state;
  double previous = 4.0;
  for (int i = 0; i < 10; ++i) {
    params[0].zero_grad();
    auto w = params[0];
    backward(sum(mul(w, w)));
    adam_step<double>(params, state, 0.1);
    const double now = params[0].data()[0] * params[0].data()[0];
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("update matches a hand-computed second step") {
  std::vector<Tensor<double>> params{param({0.0})};
  AdamState<double> state;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, w = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 0.5 : -0.2;
    params[0].zero_grad();
    params[0].grad_mut()[0] = g;
    adam_step<double>(params, state, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  CHECK(params[0].data()[0] == doctest::Approx(w).epsilon(1e-9));
}

TEST_CASE("non-finite gradient is rejected before any update") {
  std::vector<Tensor<double>> params{param({1.0, 2.0})};
  params[0].grad_mut()[0] = 1.0;
  params[0].grad_mut()[1] = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> state;
  try {
    adam_step<double>(params, state, 0.1, "enc.pri");
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(std::string(e.what()).find("enc.pri") != std::string::npos);
  }
  CHECK(params[0].data()[0] == 1.0);
  CHECK(state.step_count == 0);
}

TEST_CASE("optimizer keeps separate moments per group") {
  AdamOptimizer<double> opt;
  std::vector<Tensor<double>> a{param({1.0})}, b{param({1.0})};
  a[0].grad_mut()[0] = 1.0;
  b[0].grad_mut()[0] = 1.0;
  opt.step("a", a, 0.1);
  opt.step("a", a, 0.1);
  opt.step("b", b, 0.1);
  CHECK(opt.state("a")->step_count == 2);
  CHECK(opt.state("b")->step_count == 1);
  CHECK(opt.state("c") == nullptr);
  opt.reset();
  CHECK(opt.state("a") == nullptr);
}
