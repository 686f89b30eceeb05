#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "clqg/ops.hpp"
#include "clqg/rng.hpp"
#include "clqg/tensor.hpp"

namespace clqg::test {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = true) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor<double>::from_data(std::move(shape), std::move(data), requires_grad);
}

inline Tensor<float> random_tensor_f(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<float>(rng.uniform(lo, hi));
  return Tensor<float>::from_data(std::move(shape), std::move(data));
}

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between backward() gradients and central finite
/// differences of a scalar function of the inputs.
inline double gradient_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                             double h = 1e-4) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

/// sum(x * weights): a scalar whose gradient w.r.t. x is `weights`, so that
/// every output element contributes to the check.
inline Tensor<double> weighted_sum(const Tensor<double>& x, const Tensor<double>& weights) {
  return sum(mul(x, weights));
}

}  // namespace clqg::test
