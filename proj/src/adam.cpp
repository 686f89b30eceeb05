#include "clqg/adam.hpp"

#include <cmath>

namespace clqg {

template <typename Real>
void adam_step(std::span<Tensor<Real>> params, AdamState<Real>& state, double lr,
               const std::string& group) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), Real(0));
      state.second_moment.emplace_back(p.numel(), Real(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: group '" + group + "' has " + std::to_string(params.size()) +
                         " parameters but state for " +
                         std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: moment size mismatch in group '" + group + "' parameter " +
                           std::to_string(i));
    }
    if (!params[i].has_grad()) continue;
    for (Real g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in parameter group '" + group +
                                "' (parameter " + std::to_string(i) + ")");
      }
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const Real b1 = static_cast<Real>(state.beta1);
  const Real b2 = static_cast<Real>(state.beta2);
  const Real step_size = static_cast<Real>(lr / correction1);
  const Real inv_sqrt_c2 = static_cast<Real>(1.0 / std::sqrt(correction2));
  const Real eps = static_cast<Real>(state.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    auto grad = params[i].grad();
    auto data = params[i].data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const Real g = grad[j];
      m[j] = b1 * m[j] + (Real(1) - b1) * g;
      v[j] = b2 * v[j] + (Real(1) - b2) * g * g;
      data[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, double,
                               const std::string&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, double,
                                const std::string&);

}  // namespace clqg
