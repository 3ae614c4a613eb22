#pragma once

#include <cstddef>
#include <vector>

#include "copp/autodiff/tensor.hpp"

namespace copp::ad {

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)); steps past the end clamp to 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

struct OptimizerState {
  double base_lr = 1e-4;
  std::size_t step = 0;
  std::size_t total_steps = 1;
  double momentum = 0.9;

  double current_lr() const { return cosine_lr(step, total_steps, base_lr); }
};

/// SGD with heavy-ball momentum: v <- momentum * v + g; p <- p - lr(step) * v.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, OptimizerState state);

  /// Clears the gradient of every parameter; call before each forward pass.
  void zero_grad();
  /// Applies one update from the accumulated gradients and advances the schedule.
  void step();

  const OptimizerState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  OptimizerState state_;
};

}  // namespace copp::ad
