#include "copp/autodiff/optim.hpp"

#include <cmath>
#include <numbers>

#include "copp/errors.hpp"

namespace copp::ad {

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0) throw DomainError("cosine_lr: total_steps must be positive");
  if (step >= total_steps) return 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

Sgd::Sgd(std::vector<Tensor> params, OptimizerState state) : params_(std::move(params)), state_(state) {
  if (state_.momentum < 0.0 || state_.momentum >= 1.0) throw DomainError("sgd: momentum must lie in [0, 1)");
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Sgd::step() {
  const double lr = state_.current_lr();
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto& v = velocity_[k];
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = state_.momentum * v[i] + g[i];
      w[i] -= lr * v[i];
    }
  }
  ++state_.step;
}

}  // namespace copp::ad
