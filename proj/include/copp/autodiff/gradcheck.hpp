#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "copp/autodiff/tensor.hpp"

namespace copp::ad {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for the relative error of near-zero gradients.
  double abs_floor = 1e-6;
  /// An element whose one-sided slopes disagree by more than this fraction is
  /// straddling a kink (leaky-relu at 0, max tie) and is skipped.
  double kink_ratio = 1e-2;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of `loss` with central finite differences
/// for every element of every tensor in `params`. `loss` must rebuild the
/// graph from the current parameter values on each call and must not mutate
/// state that changes its value between calls.
GradCheckResult check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                const GradCheckOptions& options = {});

}  // namespace copp::ad
