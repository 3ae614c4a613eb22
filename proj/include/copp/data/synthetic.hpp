#pragma once

// Reproducible distorted clouds with a pseudo-MOS that is a fixed,
// strictly decreasing function of distortion severity.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "copp/config.hpp"
#include "copp/io/manifest.hpp"
#include "copp/io/point_cloud.hpp"

namespace copp::data {

enum class Shape { sphere, torus, cube_surface, composite };
enum class DistortionKind { geometry_noise, color_noise, downsample, quantize };

std::string_view shape_name(Shape s);
std::string_view kind_name(DistortionKind k);
std::optional<DistortionKind> parse_kind(std::string_view s);

struct DistortionParams {
  double max_geometry_sigma = 0.04;  // fraction of the bounding radius at level L
  double max_color_sigma = 40.0;     // color units at level L
  double min_keep = 0.3;             // keep fraction at level L
  double max_quant_step = 0.05;      // fraction of the bounding radius at level L
};

struct DistortionSpec {
  DistortionKind kind = DistortionKind::geometry_noise;
  std::size_t level = 0;      // 0 = pristine
  std::size_t max_level = 5;  // L
  DistortionParams params{};

  /// Severity in [0, 1], linear in level.
  double severity() const;
  void validate() const;
};

inline constexpr std::size_t kMinCloudPoints = 64;

/// Parameters defining one base content. Radius of the enclosing shape is 1.
struct ContentSpec {
  Shape shape = Shape::sphere;
  double torus_tube = 0.35;  // tube radius relative to the ring radius
  double color_freq[3] = {2.0, 3.0, 1.5};
  double color_phase[3] = {0.0, 1.0, 2.0};
  double color_base[3] = {128.0, 128.0, 128.0};
  double color_amp[3] = {90.0, 90.0, 90.0};
};

/// Membership of a composite point (sphere part or cube part).
inline constexpr double kCompositeSphereRadius = 0.6;
inline constexpr double kCompositeSphereCenterX = -0.7;
inline constexpr double kCompositeCubeHalf = 0.45;
inline constexpr double kCompositeCubeCenterX = 0.7;

ContentSpec random_content(Shape shape, std::uint64_t seed);

PointCloud generate_base_cloud(const ContentSpec& content, std::size_t n, std::uint64_t seed,
                               std::string name = {});
PointCloud generate_base_cloud(Shape shape, std::size_t n, std::uint64_t seed);

PointCloud apply_distortion(const PointCloud& cloud, const DistortionSpec& spec, std::uint64_t seed);

/// Curvature exponent of the pseudo-MOS curve per kind.
double mos_exponent(DistortionKind kind);
/// 100 * (1 - (level / L)^gamma).
double pseudo_mos(const DistortionSpec& spec);

struct DatasetConfig {
  std::size_t contents = 24;
  std::vector<DistortionKind> kinds = {DistortionKind::geometry_noise, DistortionKind::color_noise,
                                       DistortionKind::downsample};
  std::size_t levels = 5;  // distorted levels 1..levels per kind
  std::size_t points = 4096;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  DistortionParams params{};

  static DatasetConfig from(const Config& cfg, std::uint64_t seed);
};

struct ContentInfo {
  std::string name;
  Shape shape;
  io::Split split;
};

/// Writes <root>/<content>_<kind>_<level>.ply and <root>/manifest.csv.
/// Whole contents are assigned to the test split.
io::DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& root);

/// Content names and their split, without writing anything.
std::vector<ContentInfo> plan_contents(const DatasetConfig& cfg);

}  // namespace copp::data
