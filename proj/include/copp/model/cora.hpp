#pragma once

// Cross-patch correlation network: a two-layer MLP over each patch feature,
// pre-norm transformer encoder blocks attending across the C patches of one
// cloud (no positional encoding), and a two-layer classifier to three classes.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "copp/autodiff/checkpoint.hpp"
#include "copp/model/layers.hpp"

namespace copp::model {

enum class CorrelationLabel : int { strong = 0, average = 1, weak = 2 };

const char* label_name(CorrelationLabel label);

/// (strong, average, weak) class sizes for C patches.
std::array<std::size_t, 3> class_partition(std::size_t patches);

/// Ranks patches by |q - mos| (ties to the lower index) and assigns the
/// class_partition sizes in that order. Throws DomainError for C < 3.
std::vector<CorrelationLabel> build_correlation_labels(std::span<const double> q_patch, double mos);

std::vector<int> label_ids(std::span<const CorrelationLabel> labels);

enum class SoftmaxAxis { classes, patches };

SoftmaxAxis parse_softmax_axis(const std::string& name);

/// W_i = sum_c p_i[c] * omega_c where p is the softmax of the C x 3 logits over
/// the class axis (default) or over the patch axis.
std::vector<double> weights_from_logits(const Tensor& logits, std::span<const double> class_weights,
                                        SoftmaxAxis axis = SoftmaxAxis::classes);

/// sum(w q) / sum(w), clamped to [min q, max q]. A non-positive weight total
/// falls back to the plain mean with a note on stderr.
double correlation_weight_pool(std::span<const double> q, std::span<const double> w);

struct CoraConfig {
  std::size_t input_width = 64;  // D
  std::size_t hidden = 512;
  std::size_t blocks = 4;
  std::size_t heads = 4;
  std::size_t ff_mult = 2;

  void validate() const;
};

struct EncoderBlock {
  LayerNorm norm1;
  Linear query, key, value, proj;
  LayerNorm norm2;
  Linear ff1, ff2;

  EncoderBlock() = default;
  EncoderBlock(std::size_t hidden, std::size_t ff_width, Rng& rng);

  /// Attention runs within consecutive groups of `group` rows (one cloud each).
  Tensor operator()(const Tensor& x, std::size_t heads, std::size_t group) const;
  void collect(const std::string& prefix, ParameterList& out);
};

class CoraNet {
 public:
  CoraNet(const CoraConfig& cfg, std::uint64_t seed);

  /// [C x D] patch features of one cloud -> [C x 3] logits.
  Tensor forward(const Tensor& features) const { return forward(features, features.rows()); }
  /// Several clouds stacked as consecutive groups of `patches` rows. Every
  /// row's result is bit-identical to running its cloud alone.
  Tensor forward(const Tensor& features, std::size_t patches) const;

  const CoraConfig& config() const { return cfg_; }
  ParameterList parameters();
  void save(ad::Checkpoint& ck);
  static CoraNet load(const ad::Checkpoint& ck);

 private:
  CoraConfig cfg_;
  Linear in1_, in2_;
  std::vector<EncoderBlock> blocks_;
  LayerNorm final_norm_;
  Linear out1_, out2_;
};

}  // namespace copp::model
