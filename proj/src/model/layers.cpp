#include "copp/model/layers.hpp"

#include <cmath>

#include "copp/errors.hpp"

namespace copp::model {

std::vector<Tensor> ParameterList::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

void ParameterList::save(ad::Checkpoint& ck) const {
  for (const auto& [name, t] : params_) ck.put(name, t);
  for (const auto& [name, s] : states_) {
    ck.put(name + ".running_mean", {s->running_mean.size()}, s->running_mean);
    ck.put(name + ".running_var", {s->running_var.size()}, s->running_var);
  }
}

void ParameterList::load(const ad::Checkpoint& ck) const {
  for (const auto& [name, t] : params_) {
    Tensor handle = t;
    ck.load_into(name, handle);
  }
  for (const auto& [name, s] : states_) {
    const auto& m = ck.get(name + ".running_mean");
    const auto& v = ck.get(name + ".running_var");
    if (m.data.size() != s->running_mean.size() || v.data.size() != s->running_var.size()) {
      throw DimensionError("checkpoint batch-norm state '" + name + "' has the wrong width");
    }
    s->running_mean = m.data;
    s->running_var = v.data;
  }
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out), b(out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  weight = Tensor::from({in, out}, std::move(w), true);
  bias = Tensor::from({out}, std::move(b), true);
}

void Linear::collect(const std::string& prefix, ParameterList& out) {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

BatchNorm::BatchNorm(std::size_t width)
    : gamma(Tensor::full({width}, 1.0, true)), beta(Tensor::zeros({width}, true)), state(width) {}

void BatchNorm::collect(const std::string& prefix, ParameterList& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
  out.add_state(prefix, &state);
}

LayerNorm::LayerNorm(std::size_t width) : gamma(Tensor::full({width}, 1.0, true)), beta(Tensor::zeros({width}, true)) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
}

void PointwiseBlock::collect(const std::string& prefix, ParameterList& out) {
  linear.collect(prefix + ".linear", out);
  norm.collect(prefix + ".bn", out);
}

}  // namespace copp::model
