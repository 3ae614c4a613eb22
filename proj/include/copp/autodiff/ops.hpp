#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "copp/autodiff/tensor.hpp"

namespace copp::ad {

enum class Mode { train, eval };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Running statistics of one batch-norm layer. Updated as
/// running = momentum * running + (1 - momentum) * batch.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = kBatchNormMomentum;

  explicit BatchNormState(std::size_t width = 0) : running_mean(width, 0.0), running_var(width, 1.0) {}
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// Elementwise max; on ties the gradient goes to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor leaky_relu(const Tensor& x, double negative_slope = kLeakySlope);

// Normalization.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                  double eps = kBatchNormEps);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kBatchNormEps);

/// Max-subtracted softmax along `axis` (0 or 1 for matrices, 0 for vectors).
/// Normalizers are summed exactly, so permuting entries along the axis
/// permutes the output without any rounding change.
Tensor softmax(const Tensor& x, std::size_t axis);

/// softmax(q k^T * score_scale) v with every reduction over keys summed
/// exactly; permuting the key/value rows leaves the output bit-identical and
/// permuting query rows permutes output rows.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double score_scale);

// Reductions and set pooling.
Tensor max_reduce(const Tensor& x);
/// Max over consecutive row groups of size `group`: [n*group x d] -> [n x d].
/// Ties route the gradient to the first row of the group holding the max.
Tensor segment_max(const Tensor& x, std::size_t group);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Structural.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

// Losses.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Correctly rounded sum; the result does not depend on summation order.
double exact_sum(std::span<const double> values);
/// Non-overlapping doubles, increasing in magnitude, whose exact sum is the
/// exact sum of `values`.
std::vector<double> exact_partials(std::span<const double> values);

}  // namespace copp::ad
