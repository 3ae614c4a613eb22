#pragma once

// Patch caching, the two training stages, whole-cloud prediction and split
// evaluation.
//
// Patch cache layout (one checkpoint container per cloud, <dir>/<stem>.patches):
//   meta.cache_version      1
//   meta.C, meta.K, meta.R_t, meta.R_s, meta.radius, meta.seed
//   meta.mos
//   patch<i>.center         index of the FPS center in the source cloud
//   patch<i>.texture        [R_t x 6] texture-branch input
//   patch<i>.structure      [R_s x 6] structure-branch input

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "copp/config.hpp"
#include "copp/geometry/sampling.hpp"
#include "copp/io/manifest.hpp"
#include "copp/model/arkp.hpp"
#include "copp/model/cora.hpp"

namespace copp::train {

inline constexpr double kCacheVersion = 1;

enum class Pooling { average, cora };

Pooling parse_pooling(const std::string& name);
const char* pooling_name(Pooling p);

struct TrainConfig {
  std::size_t stage1_batch = 32;  // patches
  std::size_t stage2_batch = 4;   // clouds
  double stage1_lr = 1e-4;
  double stage2_lr = 1e-4;
  double momentum = 0.9;
  std::size_t stage1_epochs = 30;
  std::size_t stage2_epochs = 30;
  /// Stop after this many consecutive epochs whose loss improves by less than
  /// min_delta (relative); 0 disables early stopping.
  std::size_t patience = 0;
  double min_delta = 1e-4;
  /// Stage-1 augmentation: each patch is rotated about its origin by a
  /// random rotation drawn per (epoch, patch).
  bool rotate = false;
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::cora;

  void validate() const;
};

/// Every setting the pipeline needs, resolved from a Config.
struct PipelineConfig {
  geometry::SamplerConfig sampler;
  model::PatchModelConfig patch_model;
  model::CoraConfig cora;
  std::vector<double> class_weights = {1.0, 0.5, 0.1};
  model::SoftmaxAxis softmax_axis = model::SoftmaxAxis::classes;
  TrainConfig train;
  io::MosScale mos_scale;

  static PipelineConfig from(const Config& cfg, std::uint64_t seed);
  /// Cross-module consistency (R_t <= K, C >= 3 for CORA, widths, ...).
  void validate() const;
};

/// The network inputs of every patch of one cloud.
struct CloudPatches {
  std::string name;
  double mos = 0.0;
  std::vector<std::size_t> centers;
  std::vector<model::PatchInput> patches;
};

CloudPatches prepare_cloud(const PointCloud& cloud, double mos, const geometry::SamplerConfig& sampler);

ad::Checkpoint cache_to_checkpoint(const CloudPatches& cloud, const geometry::SamplerConfig& sampler);
/// Throws ConfigError when the cache was built with different sampler settings.
CloudPatches cache_from_checkpoint(const ad::Checkpoint& ck, const std::string& name,
                                   const geometry::SamplerConfig& sampler);

std::filesystem::path cache_path(const std::filesystem::path& dir, const io::ManifestEntry& entry);

/// Extracts and caches every manifest entry into `dir` (parallel over clouds).
void build_patch_cache(const std::vector<io::ManifestEntry>& entries, const geometry::SamplerConfig& sampler,
                       const std::filesystem::path& dir);

/// Loads cached patches for `entries`; with an empty `dir`, or a missing cache
/// file, the cloud is read and sampled on the fly.
std::vector<CloudPatches> load_patches(const std::vector<io::ManifestEntry>& entries,
                                       const geometry::SamplerConfig& sampler, const std::filesystem::path& dir = {});

using EpochLog = std::function<void(std::size_t epoch, double loss)>;

struct Stage1Result {
  model::PatchQualityModel model;
  std::vector<double> epoch_loss;
};

/// MSE regression of patch quality on the parent cloud's MOS over shuffled
/// patch mini-batches; SGD with momentum and cosine decay.
Stage1Result train_stage1(const std::vector<CloudPatches>& train, const PipelineConfig& cfg,
                          const EpochLog& log = {});

/// Per-cloud stage-1 outputs in eval mode.
struct PatchPredictions {
  ad::Tensor features;         // [C x D], detached
  std::vector<double> quality;  // C
};

std::uint64_t eval_seed(std::uint64_t seed, const std::string& name, std::size_t patch);

PatchPredictions predict_patches(model::PatchQualityModel& model, const CloudPatches& cloud, std::uint64_t seed);

struct Stage2Result {
  model::CoraNet cora;
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

/// Cross-entropy training of CORA on labels built once from the frozen
/// stage-1 model; mini-batches of whole clouds.
Stage2Result train_stage2(const std::vector<CloudPatches>& train, model::PatchQualityModel& stage1,
                          const PipelineConfig& cfg, const EpochLog& log = {});

/// Fraction of patches whose arg-max class equals the correlation label.
double label_accuracy(const std::vector<CloudPatches>& clouds, model::PatchQualityModel& stage1,
                      const model::CoraNet& cora, std::uint64_t seed);

struct QualityRecord {
  std::string name;
  double mos = 0.0;
  std::vector<double> q_patch;
  std::vector<model::CorrelationLabel> labels;  // empty when C < 3
  std::vector<double> w_patch;
  double q_pc = 0.0;
};

/// `cora` may be null for average pooling.
QualityRecord predict(const CloudPatches& cloud, model::PatchQualityModel& stage1, const model::CoraNet* cora,
                      Pooling pooling, const PipelineConfig& cfg);

struct EvalReport {
  Pooling pooling = Pooling::average;
  std::vector<QualityRecord> records;
  double plcc = 0.0, srcc = 0.0, rmse = 0.0;
};

EvalReport evaluate(const std::vector<CloudPatches>& clouds, model::PatchQualityModel& stage1,
                    const model::CoraNet* cora, Pooling pooling, const PipelineConfig& cfg);

/// "name,mos,q_pc,abs_err" rows followed by "# plcc=...,srcc=...,rmse=...".
std::string write_report_csv(const EvalReport& report);
/// "name,patch,q_patch,w_patch".
std::string write_patch_csv(const EvalReport& report);

struct ReportRow {
  std::string name;
  double mos = 0.0, q_pc = 0.0, abs_err = 0.0;
  bool operator==(const ReportRow&) const = default;
};
struct ParsedReport {
  std::vector<ReportRow> rows;
  double plcc = 0.0, srcc = 0.0, rmse = 0.0;
};
ParsedReport parse_report_csv(std::string_view text);

}  // namespace copp::train
