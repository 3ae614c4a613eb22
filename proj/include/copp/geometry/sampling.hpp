#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "copp/io/point_cloud.hpp"

namespace copp::geometry {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  bool operator==(const Vec3&) const = default;
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

std::vector<Vec3> positions_of(const PointCloud& cloud);

/// Row-major n x 6 block of (x, y, z, r, g, b) reals.
struct PointRows {
  std::size_t count = 0;
  std::vector<double> values;

  static constexpr std::size_t kWidth = 6;
  std::span<const double> row(std::size_t i) const { return {values.data() + i * kWidth, kWidth}; }
  Vec3 position(std::size_t i) const { return {values[i * kWidth], values[i * kWidth + 1], values[i * kWidth + 2]}; }
  std::vector<Vec3> positions() const;
  PointRows select(std::span<const std::size_t> indices) const;

  bool operator==(const PointRows&) const = default;
};

struct SamplerConfig {
  std::size_t patches = 16;             // C
  std::size_t patch_size = 14900;       // K
  std::size_t texture_points = 8192;    // R_t
  std::size_t structure_points = 1024;  // R_s
  double radius = 1000.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless C >= 1, R_t <= K and R_s <= K.
  void validate() const;
};

struct Patch {
  std::size_t center_index = 0;
  std::string parent;
  PointRows points;  // K rows, centered in position and color
};

/// Translates the centroid to the origin, then scales uniformly so the
/// farthest point sits at `radius`. Colors are untouched.
PointCloud normalize_to_sphere(const PointCloud& cloud, double radius = 1000.0);

/// Greedy farthest point sampling from a given start index; each next index
/// maximizes the minimum distance to the selected set, ties to the lowest index.
std::vector<std::size_t> farthest_point_sample_from(std::span<const Vec3> positions, std::size_t count,
                                                    std::size_t start);
/// Same, with the start index drawn from a PRNG seeded by `seed`.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> positions, std::size_t count,
                                               std::uint64_t seed);

/// Indices of the k nearest positions to `query`, ascending by distance, ties
/// to the lowest index. Exhaustive scan.
std::vector<std::size_t> knn(std::span<const Vec3> positions, const Vec3& query, std::size_t k);

/// Uniform-grid index answering exact k-nearest queries with the same ordering
/// contract as knn(); used for large clouds.
class KnnIndex {
 public:
  explicit KnnIndex(std::span<const Vec3> positions, std::size_t target_per_cell = 16);
  std::vector<std::size_t> query(const Vec3& q, std::size_t k) const;

 private:
  std::size_t cell_of(long ix, long iy, long iz) const;

  std::span<const Vec3> points_;
  Vec3 origin_;
  double cell_ = 1.0;
  long dims_[3] = {1, 1, 1};
  std::vector<std::size_t> cell_start_;  // CSR offsets, size cells+1
  std::vector<std::size_t> cell_items_;
};

/// Brute force below this size, KnnIndex at or above.
inline constexpr std::size_t kBruteForceKnnLimit = 4096;

/// Subtracts the mean position from (x, y, z) and, separately, the mean color
/// from (r, g, b).
PointRows center_patch(const PointRows& points);

/// normalize -> FPS centers -> K nearest points per center -> center.
std::vector<Patch> extract_patches(const PointCloud& cloud, const SamplerConfig& cfg);

/// The R_t patch points nearest to the patch origin, nearest first.
PointRows sample_texture_input(const Patch& patch, std::size_t count);
/// R_s patch points drawn uniformly without replacement, in draw order.
PointRows sample_structure_input(const Patch& patch, std::size_t count, std::uint64_t seed);

/// Seed of the structure sample for patch `patch_index` of `cloud_name`.
std::uint64_t structure_seed(std::uint64_t seed, const std::string& cloud_name, std::size_t patch_index);

/// Uniformly distributed rotation matrix (row major), from a normalized
/// Gaussian quaternion.
std::array<double, 9> random_rotation(std::uint64_t seed);
/// Rotates the position columns about the origin; colors are untouched.
PointRows rotate_rows(const PointRows& rows, const std::array<double, 9>& m);

/// Writes <dir>/<cloud>_patch<i>.ply for visual inspection; colors are
/// shifted by +128 and clamped to 0-255.
void dump_patches(const std::filesystem::path& dir, const std::vector<Patch>& patches);

}  // namespace copp::geometry
