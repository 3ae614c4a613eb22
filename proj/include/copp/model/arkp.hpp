#pragma once

// Point-set feature generator: a per-point stride convolution, three
// set-abstraction levels (random centroid sampling, KNN grouping, shared MLP
// with max pooling), a second stride convolution and a global max.
// Two instances (texture and structure branch) feed a shared regression head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "copp/autodiff/checkpoint.hpp"
#include "copp/geometry/sampling.hpp"
#include "copp/model/layers.hpp"

namespace copp::model {

struct LevelConfig {
  std::size_t divisor = 2;  // retains input_points / divisor centroids
  std::size_t group_k = 16;
  std::vector<std::size_t> widths;

  bool operator==(const LevelConfig&) const = default;
};

struct ArkpConfig {
  std::vector<LevelConfig> levels = {{2, 16, {32, 64}}, {4, 16, {64, 128}}, {8, 16, {128, 64}}};
  std::size_t pre_conv_width = 32;
  std::size_t d_branch = 64;  // width of the closing stride convolution and of the output
  // Fixed input units: coordinates (absolute and relative) and colors are
  // multiplied by these before entering a linear layer. Grouping uses the
  // unscaled coordinates.
  double coord_scale = 1e-3;
  double color_scale = 1.0 / 255.0;
  static constexpr std::size_t kInputChannels = 6;

  /// Points retained after each level for `input_points` inputs. Throws
  /// ConfigError when counts are not strictly decreasing or a group is larger
  /// than the level's input.
  std::vector<std::size_t> level_sizes(std::size_t input_points) const;

  /// "divisor:group_k:w1,w2;..." as used by the arkp.levels key.
  static std::vector<LevelConfig> parse_levels(std::string_view text);
  std::string levels_string() const;

  bool operator==(const ArkpConfig&) const = default;
};

/// Centroid and neighbor choices of one set-abstraction level over a batch of
/// B point sets stored back to back (row b * n_in + i is point i of set b).
struct GroupingPlan {
  std::size_t batch = 0, n_in = 0, n_out = 0, group_k = 0;
  std::vector<std::size_t> centroids;  // B * n_out global rows
  std::vector<std::size_t> neighbors;  // B * n_out * group_k global rows, nearest first
};

/// Seeded uniform centroid sampling without replacement and KNN grouping,
/// independently per set. `item_seeds` has one entry per set.
GroupingPlan plan_grouping(std::span<const geometry::Vec3> positions, std::size_t batch, std::size_t n_in,
                           std::size_t n_out, std::size_t group_k, std::span<const std::uint64_t> item_seeds,
                           std::size_t level);

struct LevelOutput {
  std::vector<geometry::Vec3> positions;  // centroid positions, B * n_out
  Tensor features;                        // [B * n_out x last width]
};

/// Groups features per `plan`, prepends neighbor-minus-centroid coordinates,
/// runs the shared MLP and max-pools each group.
LevelOutput set_abstraction(std::span<const geometry::Vec3> positions, const Tensor& features,
                            const GroupingPlan& plan, std::vector<PointwiseBlock>& mlp, Mode mode,
                            double coord_scale = 1.0);

class ArkpNet {
 public:
  ArkpNet(const ArkpConfig& cfg, Rng& rng);

  /// Per-point shared block applied before the levels.
  PointwiseBlock& pre_conv() { return pre_; }
  PointwiseBlock& post_conv() { return post_; }
  std::vector<PointwiseBlock>& level_mlp(std::size_t level) { return levels_.at(level); }

  /// Features of B point sets of equal size. Returns [B x d_branch].
  Tensor forward(std::span<const geometry::PointRows* const> batch, Mode mode,
                 std::span<const std::uint64_t> item_seeds);

  const ArkpConfig& config() const { return cfg_; }
  void collect(const std::string& prefix, ParameterList& out);

 private:
  ArkpConfig cfg_;
  PointwiseBlock pre_;
  std::vector<std::vector<PointwiseBlock>> levels_;
  PointwiseBlock post_;
};

/// Fusion of the two branch vectors (rows of [B x D]): elementwise max when
/// widths agree, concatenation otherwise.
Tensor fuse_features(const Tensor& texture, const Tensor& structure);

/// linear(D -> H) -> batch norm -> leaky ReLU -> linear(H -> 1), followed by
/// a fixed affine map (out_scale, out_shift) into MOS units.
struct QualityHead {
  Linear hidden;
  BatchNorm norm;
  Linear out;
  double out_scale = 1.0;
  double out_shift = 0.0;

  QualityHead() = default;
  QualityHead(std::size_t in, std::size_t hidden_width, Rng& rng);

  Tensor operator()(const Tensor& features, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);
};

struct PatchModelConfig {
  ArkpConfig arkp;
  std::size_t head_hidden = 64;
  std::size_t texture_points = 128;   // R_t
  std::size_t structure_points = 64;  // R_s

  void validate() const;
  std::size_t feature_width() const;
};

/// One patch's two network inputs.
struct PatchInput {
  geometry::PointRows texture;
  geometry::PointRows structure;
};

struct PatchOutput {
  Tensor features;  // [B x D]
  Tensor quality;   // [B x 1]
};

/// Stage-1 network: both branches, fusion and the regression head.
class PatchQualityModel {
 public:
  PatchQualityModel(const PatchModelConfig& cfg, std::uint64_t seed);

  PatchOutput forward(std::span<const PatchInput* const> batch, Mode mode, std::span<const std::uint64_t> item_seeds);

  ArkpNet& texture() { return texture_; }
  ArkpNet& structure() { return structure_; }
  QualityHead& head() { return head_; }
  const PatchModelConfig& config() const { return cfg_; }

  ParameterList parameters();
  void save(ad::Checkpoint& ck);
  /// Rebuilds the architecture from checkpoint metadata and loads weights.
  static PatchQualityModel load(const ad::Checkpoint& ck);

 private:
  PatchModelConfig cfg_;
  ArkpNet texture_;
  ArkpNet structure_;
  QualityHead head_;
};

}  // namespace copp::model
