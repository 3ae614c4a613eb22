#include "copp/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace copp::ad {

GradCheckResult check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                const GradCheckOptions& options) {
  for (auto& p : params) p.zero_grad();
  const Tensor l0 = loss();
  l0.backward();
  const double f0 = l0.item();

  GradCheckResult result;
  const double h = options.step;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    if (analytic.empty()) analytic.assign(p.size(), 0.0);
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double fp = loss().item();
      w[i] = orig - h;
      const double fm = loss().item();
      w[i] = orig;

      const double right = (fp - f0) / h;
      const double left = (f0 - fm) / h;
      const double scale = std::max({std::fabs(right), std::fabs(left), options.abs_floor});
      if (std::fabs(right - left) > options.kink_ratio * scale) {
        ++result.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), options.abs_floor});
      result.max_rel_err = std::max(result.max_rel_err, std::fabs(numeric - analytic[i]) / denom);
      ++result.checked;
    }
    p.zero_grad();
  }
  return result;
}

}  // namespace copp::ad
