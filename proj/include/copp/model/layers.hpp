#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "copp/autodiff/checkpoint.hpp"
#include "copp/autodiff/ops.hpp"
#include "copp/autodiff/tensor.hpp"
#include "copp/rng.hpp"

namespace copp::model {

using ad::Mode;
using ad::Tensor;

/// Collects named parameters and batch-norm buffers of a module tree.
class ParameterList {
 public:
  void add(const std::string& name, const Tensor& t) { params_.emplace_back(name, t); }
  void add_state(const std::string& name, ad::BatchNormState* s) { states_.emplace_back(name, s); }

  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  std::vector<Tensor> tensors() const;

  void save(ad::Checkpoint& ck) const;
  void load(const ad::Checkpoint& ck) const;

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, ad::BatchNormState*>> states_;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Linear() = default;
  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return ad::linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out);
};

struct BatchNorm {
  Tensor gamma, beta;
  ad::BatchNormState state;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t width);

  Tensor operator()(const Tensor& x, Mode mode) { return ad::batch_norm(x, gamma, beta, state, mode); }
  void collect(const std::string& prefix, ParameterList& out);
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  Tensor operator()(const Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParameterList& out);
};

/// Shared per-row linear map, batch norm and leaky ReLU. Applied to every
/// point (row) independently except for the batch statistics.
struct PointwiseBlock {
  Linear linear;
  BatchNorm norm;

  PointwiseBlock() = default;
  PointwiseBlock(std::size_t in, std::size_t out, Rng& rng) : linear(in, out, rng), norm(out) {}

  Tensor operator()(const Tensor& x, Mode mode) { return ad::leaky_relu(norm(linear(x), mode)); }
  void collect(const std::string& prefix, ParameterList& out);
  std::size_t out_width() const { return linear.weight.dim(1); }
};

}  // namespace copp::model
