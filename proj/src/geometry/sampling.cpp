#include "copp/geometry/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "copp/errors.hpp"
#include "copp/io/ply.hpp"
#include "copp/rng.hpp"

namespace copp::geometry {

namespace {

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

std::vector<std::size_t> take_sorted(std::vector<Candidate>& c, std::size_t k) {
  if (k < c.size()) {
    std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k), c.end());
    c.resize(k);
  }
  std::sort(c.begin(), c.end());
  std::vector<std::size_t> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].index;
  return out;
}

}  // namespace

std::vector<Vec3> positions_of(const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) out.push_back({p.x, p.y, p.z});
  return out;
}

std::vector<Vec3> PointRows::positions() const {
  std::vector<Vec3> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = position(i);
  return out;
}

PointRows PointRows::select(std::span<const std::size_t> indices) const {
  PointRows out;
  out.count = indices.size();
  out.values.reserve(indices.size() * kWidth);
  for (auto i : indices) {
    const auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
  }
  return out;
}

void SamplerConfig::validate() const {
  if (patches < 1) throw ConfigError("sampler.C must be at least 1");
  if (patch_size < 1) throw ConfigError("sampler.K must be at least 1");
  if (texture_points < 1 || texture_points > patch_size) {
    throw ConfigError("sampler.R_t must lie in [1, K=" + std::to_string(patch_size) + "]");
  }
  if (structure_points < 1 || structure_points > patch_size) {
    throw ConfigError("sampler.R_s must lie in [1, K=" + std::to_string(patch_size) + "]");
  }
  if (!(radius > 0.0)) throw ConfigError("sampler.radius must be positive");
}

PointCloud normalize_to_sphere(const PointCloud& cloud, double radius) {
  if (cloud.points.empty()) throw DegenerateCloudError("cannot normalize an empty cloud");
  double cx = 0.0, cy = 0.0, cz = 0.0;
  for (const auto& p : cloud.points) {
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  const double n = static_cast<double>(cloud.size());
  cx /= n;
  cy /= n;
  cz /= n;
  double max_norm = 0.0;
  for (const auto& p : cloud.points) {
    max_norm = std::max(max_norm, std::sqrt((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy) + (p.z - cz) * (p.z - cz)));
  }
  if (!(max_norm > 0.0)) throw DegenerateCloudError("cloud '" + cloud.name + "' has all points coincident");
  const double s = radius / max_norm;
  PointCloud out = cloud;
  for (auto& p : out.points) {
    p.x = (p.x - cx) * s;
    p.y = (p.y - cy) * s;
    p.z = (p.z - cz) * s;
  }
  return out;
}

std::vector<std::size_t> farthest_point_sample_from(std::span<const Vec3> positions, std::size_t count,
                                                    std::size_t start) {
  const auto n = positions.size();
  if (count > n) {
    throw DomainError("farthest_point_sample: requested " + std::to_string(count) + " centers from " +
                      std::to_string(n) + " points");
  }
  if (count == 0) return {};
  if (start >= n) throw DomainError("farthest_point_sample: start index out of range");
  std::vector<std::size_t> selected{start};
  selected.reserve(count);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  taken[start] = true;
  std::size_t last = start;
  while (selected.size() < count) {
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d2[i] = std::min(min_d2[i], squared_distance(positions[i], positions[last]));
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    taken[best] = true;
    selected.push_back(best);
    last = best;
  }
  return selected;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> positions, std::size_t count,
                                               std::uint64_t seed) {
  if (count > positions.size()) {
    throw DomainError("farthest_point_sample: requested " + std::to_string(count) + " centers from " +
                      std::to_string(positions.size()) + " points");
  }
  if (count == 0) return {};
  Rng rng(seed);
  return farthest_point_sample_from(positions, count, static_cast<std::size_t>(rng.below(positions.size())));
}

std::vector<std::size_t> knn(std::span<const Vec3> positions, const Vec3& query, std::size_t k) {
  if (k > positions.size()) {
    throw DomainError("knn: k=" + std::to_string(k) + " exceeds " + std::to_string(positions.size()) + " points");
  }
  std::vector<Candidate> c(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) c[i] = {squared_distance(positions[i], query), i};
  return take_sorted(c, k);
}

KnnIndex::KnnIndex(std::span<const Vec3> positions, std::size_t target_per_cell) : points_(positions) {
  if (positions.empty()) throw DomainError("KnnIndex: empty point set");
  Vec3 lo = positions[0], hi = positions[0];
  for (const auto& p : positions) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  origin_ = lo;
  const double ext[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
  const double max_ext = std::max({ext[0], ext[1], ext[2]});
  const double cells_wanted = std::max(1.0, static_cast<double>(positions.size()) /
                                                static_cast<double>(std::max<std::size_t>(target_per_cell, 1)));
  cell_ = max_ext > 0.0 ? max_ext / std::max(1.0, std::cbrt(cells_wanted)) : 1.0;
  for (int a = 0; a < 3; ++a) dims_[a] = std::max<long>(1, static_cast<long>(std::floor(ext[a] / cell_)) + 1);

  const auto cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::size_t> cell_of_point(positions.size());
  cell_start_.assign(cells + 1, 0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    const long ix = std::min(dims_[0] - 1, static_cast<long>((p.x - origin_.x) / cell_));
    const long iy = std::min(dims_[1] - 1, static_cast<long>((p.y - origin_.y) / cell_));
    const long iz = std::min(dims_[2] - 1, static_cast<long>((p.z - origin_.z) / cell_));
    cell_of_point[i] = cell_of(ix, iy, iz);
    ++cell_start_[cell_of_point[i] + 1];
  }
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
  cell_items_.resize(positions.size());
  auto fill = cell_start_;
  for (std::size_t i = 0; i < positions.size(); ++i) cell_items_[fill[cell_of_point[i]]++] = i;
}

std::size_t KnnIndex::cell_of(long ix, long iy, long iz) const {
  return static_cast<std::size_t>((iz * dims_[1] + iy) * dims_[0] + ix);
}

std::vector<std::size_t> KnnIndex::query(const Vec3& q, std::size_t k) const {
  if (k > points_.size()) {
    throw DomainError("knn: k=" + std::to_string(k) + " exceeds " + std::to_string(points_.size()) + " points");
  }
  auto clamp_cell = [&](double v, double o, long dim) {
    return std::clamp(static_cast<long>(std::floor((v - o) / cell_)), 0L, dim - 1);
  };
  const long qc[3] = {clamp_cell(q.x, origin_.x, dims_[0]), clamp_cell(q.y, origin_.y, dims_[1]),
                      clamp_cell(q.z, origin_.z, dims_[2])};
  // Distance from q to the outside of the cell block [qc - r, qc + r]; q may
  // lie outside the grid, in which case the bound is conservative (0).
  auto outside_bound = [&](long r) {
    double bound = std::numeric_limits<double>::infinity();
    const double qv[3] = {q.x, q.y, q.z};
    const double ov[3] = {origin_.x, origin_.y, origin_.z};
    for (int a = 0; a < 3; ++a) {
      const double lo_face = ov[a] + static_cast<double>(qc[a] - r) * cell_;
      const double hi_face = ov[a] + static_cast<double>(qc[a] + r + 1) * cell_;
      if (qc[a] - r > 0) bound = std::min(bound, qv[a] - lo_face);
      if (qc[a] + r + 1 < dims_[a]) bound = std::min(bound, hi_face - qv[a]);
    }
    return std::max(bound, 0.0);
  };

  std::vector<Candidate> cand;
  const long max_r = std::max({dims_[0], dims_[1], dims_[2]});
  for (long r = 0;; ++r) {
    // Add the shell at Chebyshev radius r.
    for (long z = qc[2] - r; z <= qc[2] + r; ++z) {
      if (z < 0 || z >= dims_[2]) continue;
      for (long y = qc[1] - r; y <= qc[1] + r; ++y) {
        if (y < 0 || y >= dims_[1]) continue;
        for (long x = qc[0] - r; x <= qc[0] + r; ++x) {
          if (x < 0 || x >= dims_[0]) continue;
          if (std::max({std::labs(x - qc[0]), std::labs(y - qc[1]), std::labs(z - qc[2])}) != r) continue;
          const auto c = cell_of(x, y, z);
          for (auto it = cell_start_[c]; it < cell_start_[c + 1]; ++it) {
            const auto idx = cell_items_[it];
            cand.push_back({squared_distance(points_[idx], q), idx});
          }
        }
      }
    }
    if (r >= max_r) break;
    if (cand.size() >= k) {
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
      const double kth = cand[k - 1].d2;
      const double b = outside_bound(r);
      if (kth < b * b) break;
    }
  }
  return take_sorted(cand, k);
}

PointRows center_patch(const PointRows& points) {
  if (points.count == 0) throw DomainError("center_patch: empty patch");
  constexpr auto W = PointRows::kWidth;
  double mean[W] = {};
  for (std::size_t i = 0; i < points.count; ++i)
    for (std::size_t c = 0; c < W; ++c) mean[c] += points.values[i * W + c];
  for (auto& m : mean) m /= static_cast<double>(points.count);
  PointRows out = points;
  for (std::size_t i = 0; i < out.count; ++i)
    for (std::size_t c = 0; c < W; ++c) out.values[i * W + c] -= mean[c];
  return out;
}

std::vector<Patch> extract_patches(const PointCloud& cloud, const SamplerConfig& cfg) {
  cfg.validate();
  if (cloud.size() < cfg.patch_size) {
    throw ConfigError("cloud '" + cloud.name + "' has " + std::to_string(cloud.size()) + " points, fewer than K=" +
                      std::to_string(cfg.patch_size) + "; use a smaller sampler.K");
  }
  if (cloud.size() < cfg.patches) {
    throw ConfigError("cloud '" + cloud.name + "' has fewer points than sampler.C");
  }
  const auto normalized = normalize_to_sphere(cloud, cfg.radius);
  const auto pos = positions_of(normalized);
  const auto centers = farthest_point_sample(pos, cfg.patches, stream_key({cfg.seed, hash_string(cloud.name), 0xF95}));

  std::unique_ptr<KnnIndex> index;
  if (pos.size() >= kBruteForceKnnLimit) index = std::make_unique<KnnIndex>(pos);

  std::vector<Patch> patches;
  patches.reserve(centers.size());
  for (auto c : centers) {
    const auto members = index ? index->query(pos[c], cfg.patch_size) : knn(pos, pos[c], cfg.patch_size);
    PointRows raw;
    raw.count = members.size();
    raw.values.reserve(members.size() * PointRows::kWidth);
    for (auto m : members) {
      const auto& p = normalized.points[m];
      raw.values.insert(raw.values.end(), {p.x, p.y, p.z, static_cast<double>(p.r), static_cast<double>(p.g),
                                           static_cast<double>(p.b)});
    }
    patches.push_back({c, cloud.name, center_patch(raw)});
  }
  return patches;
}

PointRows sample_texture_input(const Patch& patch, std::size_t count) {
  if (count > patch.points.count) {
    throw DomainError("sample_texture_input: R_t=" + std::to_string(count) + " exceeds K=" +
                      std::to_string(patch.points.count));
  }
  const auto pos = patch.points.positions();
  return patch.points.select(knn(pos, Vec3{}, count));
}

PointRows sample_structure_input(const Patch& patch, std::size_t count, std::uint64_t seed) {
  if (count > patch.points.count) {
    throw DomainError("sample_structure_input: R_s=" + std::to_string(count) + " exceeds K=" +
                      std::to_string(patch.points.count));
  }
  Rng rng(seed);
  return patch.points.select(rng.sample_without_replacement(patch.points.count, count));
}

std::uint64_t structure_seed(std::uint64_t seed, const std::string& cloud_name, std::size_t patch_index) {
  return stream_key({seed, hash_string(cloud_name), patch_index, 0x5});
}

void dump_patches(const std::filesystem::path& dir, const std::vector<Patch>& patches) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = patches[i];
    PointCloud c;
    c.name = p.parent + "_patch" + std::to_string(i);
    for (std::size_t r = 0; r < p.points.count; ++r) {
      const auto row = p.points.row(r);
      auto color = [](double v) { return static_cast<int>(std::clamp(std::lround(v + 128.0), 0L, 255L)); };
      c.points.push_back({row[0], row[1], row[2], color(row[3]), color(row[4]), color(row[5])});
    }
    io::write_ply_file(dir / (c.name + ".ply"), c);
  }
}

std::array<double, 9> random_rotation(std::uint64_t seed) {
  Rng rng(seed);
  double q[4];
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : q) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const auto [w, x, y, z] = q;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

PointRows rotate_rows(const PointRows& rows, const std::array<double, 9>& m) {
  PointRows out = rows;
  for (std::size_t i = 0; i < rows.count; ++i) {
    const double* p = rows.values.data() + i * PointRows::kWidth;
    double* o = out.values.data() + i * PointRows::kWidth;
    for (int a = 0; a < 3; ++a) o[a] = m[a * 3] * p[0] + m[a * 3 + 1] * p[1] + m[a * 3 + 2] * p[2];
  }
  return out;
}

}  // namespace copp::geometry
