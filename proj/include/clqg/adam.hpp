#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clqg/tensor.hpp"

namespace clqg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments for one parameter group; one moment array per parameter tensor.
template <typename Real>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const AdamConfig& config)
      : beta1(config.beta1), beta2(config.beta2), epsilon(config.epsilon) {}
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update of params from their accumulated grads.
/// Parameters without a grad buffer are treated as having zero gradient.
/// Throws NonFiniteGradient (naming group) before touching anything if any
/// gradient entry is NaN or infinite.
template <typename Real>
void adam_step(std::span<Tensor<Real>> params, AdamState<Real>& state, double lr,
               const std::string& group = "params");

/// Adam with independent state per named parameter group, so that updating
/// one group never disturbs another group's moments.
template <typename Real>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  void step(const std::string& group, std::span<Tensor<Real>> params, double lr) {
    auto it = states_.try_emplace(group, config_).first;
    adam_step(params, it->second, lr, group);
  }

  const AdamState<Real>* state(const std::string& group) const {
    auto it = states_.find(group);
    return it == states_.end() ? nullptr : &it->second;
  }

  void reset() { states_.clear(); }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::map<std::string, AdamState<Real>> states_;
};

}  // namespace clqg
