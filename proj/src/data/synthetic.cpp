#include "copp/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "copp/errors.hpp"
#include "copp/io/ply.hpp"
#include "copp/io/text.hpp"
#include "copp/parallel.hpp"
#include "copp/rng.hpp"

namespace copp::data {

namespace {

constexpr double kPi = std::numbers::pi;

int to_color(double v) { return static_cast<int>(std::clamp(std::lround(v), 0L, 255L)); }

void paint(const ContentSpec& c, Point& p) {
  const double u[3] = {p.x + p.y, p.y + p.z, p.z + p.x};
  int* out[3] = {&p.r, &p.g, &p.b};
  for (int k = 0; k < 3; ++k) {
    *out[k] = to_color(c.color_base[k] + c.color_amp[k] * std::sin(c.color_freq[k] * u[k] + c.color_phase[k]));
  }
}

Point on_sphere(Rng& rng, double cx, double radius) {
  double x, y, z, norm;
  do {
    x = rng.normal();
    y = rng.normal();
    z = rng.normal();
    norm = std::sqrt(x * x + y * y + z * z);
  } while (norm < 1e-12);
  return {cx + radius * x / norm, radius * y / norm, radius * z / norm};
}

Point on_cube(Rng& rng, double cx, double half) {
  const auto face = rng.below(6);
  const double a = rng.uniform(-half, half), b = rng.uniform(-half, half);
  const double s = (face % 2 == 0) ? half : -half;
  switch (face / 2) {
    case 0: return {cx + s, a, b};
    case 1: return {cx + a, s, b};
    default: return {cx + a, b, s};
  }
}

Point on_torus(Rng& rng, double tube_ratio) {
  // Ring radius chosen so the outer equator sits at distance 1.
  const double ring = 1.0 / (1.0 + tube_ratio);
  const double tube = tube_ratio * ring;
  while (true) {
    const double u = rng.uniform(0.0, 2.0 * kPi), v = rng.uniform(0.0, 2.0 * kPi);
    // Area element is proportional to (ring + tube cos v).
    if (rng.uniform() * (ring + tube) <= ring + tube * std::cos(v)) {
      const double w = ring + tube * std::cos(v);
      return {w * std::cos(u), w * std::sin(u), tube * std::sin(v)};
    }
  }
}

double bounding_radius(const PointCloud& c) {
  double cx = 0, cy = 0, cz = 0;
  for (const auto& p : c.points) {
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  const double n = static_cast<double>(c.size());
  cx /= n;
  cy /= n;
  cz /= n;
  double r = 0.0;
  for (const auto& p : c.points) r = std::max(r, std::hypot(p.x - cx, p.y - cy, p.z - cz));
  return r;
}

}  // namespace

std::string_view shape_name(Shape s) {
  switch (s) {
    case Shape::sphere: return "sphere";
    case Shape::torus: return "torus";
    case Shape::cube_surface: return "cube";
    case Shape::composite: return "composite";
  }
  return "?";
}

std::string_view kind_name(DistortionKind k) {
  switch (k) {
    case DistortionKind::geometry_noise: return "geometry_noise";
    case DistortionKind::color_noise: return "color_noise";
    case DistortionKind::downsample: return "downsample";
    case DistortionKind::quantize: return "quantize";
  }
  return "?";
}

std::optional<DistortionKind> parse_kind(std::string_view s) {
  for (auto k : {DistortionKind::geometry_noise, DistortionKind::color_noise, DistortionKind::downsample,
                 DistortionKind::quantize}) {
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

double DistortionSpec::severity() const {
  return static_cast<double>(level) / static_cast<double>(max_level);
}

void DistortionSpec::validate() const {
  if (max_level < 1) throw DomainError("distortion: max level must be at least 1");
  if (level > max_level) {
    throw DomainError("distortion: level " + std::to_string(level) + " exceeds " + std::to_string(max_level));
  }
  if (!(params.min_keep > 0.0 && params.min_keep <= 1.0)) throw DomainError("distortion: keep fraction must be in (0, 1]");
}

ContentSpec random_content(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  ContentSpec c;
  c.shape = shape;
  c.torus_tube = rng.uniform(0.25, 0.45);
  for (int k = 0; k < 3; ++k) {
    c.color_freq[k] = rng.uniform(1.5, 4.0);
    c.color_phase[k] = rng.uniform(0.0, 2.0 * kPi);
    c.color_base[k] = rng.uniform(100.0, 156.0);
    c.color_amp[k] = rng.uniform(50.0, 90.0);
  }
  return c;
}

PointCloud generate_base_cloud(const ContentSpec& content, std::size_t n, std::uint64_t seed, std::string name) {
  if (n < kMinCloudPoints) {
    throw DomainError("base cloud needs at least " + std::to_string(kMinCloudPoints) + " points");
  }
  Rng rng(seed);
  PointCloud cloud;
  cloud.name = name.empty() ? std::string(shape_name(content.shape)) : std::move(name);
  cloud.points.reserve(n);
  switch (content.shape) {
    case Shape::sphere:
      for (std::size_t i = 0; i < n; ++i) cloud.points.push_back(on_sphere(rng, 0.0, 1.0));
      break;
    case Shape::torus:
      for (std::size_t i = 0; i < n; ++i) cloud.points.push_back(on_torus(rng, content.torus_tube));
      break;
    case Shape::cube_surface:
      for (std::size_t i = 0; i < n; ++i) cloud.points.push_back(on_cube(rng, 0.0, 1.0 / std::sqrt(3.0)));
      break;
    case Shape::composite: {
      const double sphere_area = 4.0 * kPi * kCompositeSphereRadius * kCompositeSphereRadius;
      const double cube_area = 24.0 * kCompositeCubeHalf * kCompositeCubeHalf;
      const auto n_sphere = static_cast<std::size_t>(
          std::lround(static_cast<double>(n) * sphere_area / (sphere_area + cube_area)));
      for (std::size_t i = 0; i < n_sphere; ++i) {
        cloud.points.push_back(on_sphere(rng, kCompositeSphereCenterX, kCompositeSphereRadius));
      }
      for (std::size_t i = n_sphere; i < n; ++i) {
        cloud.points.push_back(on_cube(rng, kCompositeCubeCenterX, kCompositeCubeHalf));
      }
      break;
    }
  }
  for (auto& p : cloud.points) paint(content, p);
  return cloud;
}

PointCloud generate_base_cloud(Shape shape, std::size_t n, std::uint64_t seed) {
  return generate_base_cloud(random_content(shape, stream_key({seed, 0xC0})), n, seed);
}

PointCloud apply_distortion(const PointCloud& cloud, const DistortionSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.level == 0) return cloud;
  Rng rng(seed);
  const double sev = spec.severity();
  PointCloud out = cloud;
  switch (spec.kind) {
    case DistortionKind::geometry_noise: {
      const double sigma = sev * spec.params.max_geometry_sigma * bounding_radius(cloud);
      for (auto& p : out.points) {
        p.x += sigma * rng.normal();
        p.y += sigma * rng.normal();
        p.z += sigma * rng.normal();
      }
      break;
    }
    case DistortionKind::color_noise: {
      const double sigma = sev * spec.params.max_color_sigma;
      for (auto& p : out.points) {
        p.r = to_color(p.r + sigma * rng.normal());
        p.g = to_color(p.g + sigma * rng.normal());
        p.b = to_color(p.b + sigma * rng.normal());
      }
      break;
    }
    case DistortionKind::downsample: {
      const double keep = 1.0 - sev * (1.0 - spec.params.min_keep);
      const auto n = cloud.size();
      const auto m = static_cast<std::size_t>(std::ceil(keep * static_cast<double>(n) - 1e-9));
      if (m < kMinCloudPoints) {
        throw DomainError("downsample leaves " + std::to_string(m) + " points, fewer than " +
                          std::to_string(kMinCloudPoints));
      }
      auto idx = rng.sample_without_replacement(n, m);
      std::sort(idx.begin(), idx.end());
      out.points.clear();
      for (auto i : idx) out.points.push_back(cloud.points[i]);
      break;
    }
    case DistortionKind::quantize: {
      const double step = sev * spec.params.max_quant_step * bounding_radius(cloud);
      auto snap = [step](double v) { return std::round(v / step) * step; };
      for (auto& p : out.points) {
        p.x = snap(p.x);
        p.y = snap(p.y);
        p.z = snap(p.z);
      }
      break;
    }
  }
  if (out.size() < kMinCloudPoints) throw DomainError("distorted cloud has fewer than 64 points");
  return out;
}

double mos_exponent(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::geometry_noise: return 0.8;
    case DistortionKind::color_noise: return 1.2;
    case DistortionKind::downsample: return 1.5;
    case DistortionKind::quantize: return 1.0;
  }
  return 1.0;
}

double pseudo_mos(const DistortionSpec& spec) {
  spec.validate();
  return 100.0 * (1.0 - std::pow(spec.severity(), mos_exponent(spec.kind)));
}

DatasetConfig DatasetConfig::from(const Config& cfg, std::uint64_t seed) {
  DatasetConfig d;
  d.contents = cfg.get_size("data.contents");
  d.kinds.clear();
  for (const auto& k : cfg.get_strings("data.kinds")) {
    const auto kind = parse_kind(k);
    if (!kind) throw ConfigError("data.kinds: unknown distortion '" + k + "'");
    d.kinds.push_back(*kind);
  }
  d.levels = cfg.get_size("data.levels");
  d.points = cfg.get_size("data.points");
  d.test_fraction = cfg.get_double("data.test_fraction");
  d.params.max_geometry_sigma = cfg.get_double("data.max_geometry_sigma");
  d.params.max_color_sigma = cfg.get_double("data.max_color_sigma");
  d.params.min_keep = cfg.get_double("data.min_keep");
  d.params.max_quant_step = cfg.get_double("data.max_quant_step");
  d.seed = seed;
  if (d.kinds.empty()) throw ConfigError("data.kinds must name at least one distortion");
  if (d.levels < 1) throw ConfigError("data.levels must be at least 1");
  if (d.contents < 1) throw ConfigError("data.contents must be at least 1");
  if (d.test_fraction < 0.0 || d.test_fraction >= 1.0) throw ConfigError("data.test_fraction must lie in [0, 1)");
  if (!(d.params.max_geometry_sigma >= 0.0) || !(d.params.max_color_sigma >= 0.0) || !(d.params.max_quant_step >= 0.0)) {
    throw ConfigError("data distortion strengths must be non-negative");
  }
  if (!(d.params.min_keep > 0.0 && d.params.min_keep <= 1.0)) throw ConfigError("data.min_keep must lie in (0, 1]");
  return d;
}

std::vector<ContentInfo> plan_contents(const DatasetConfig& cfg) {
  if (cfg.test_fraction > 0.0 && cfg.contents < 5) {
    throw ConfigError("a content-level split needs at least 5 base contents, got " + std::to_string(cfg.contents));
  }
  constexpr Shape shapes[] = {Shape::sphere, Shape::torus, Shape::cube_surface, Shape::composite};
  std::vector<ContentInfo> out;
  for (std::size_t c = 0; c < cfg.contents; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%02zu_", c);
    const auto shape = shapes[c % 4];
    out.push_back({buf + std::string(shape_name(shape)), shape, io::Split::train});
  }
  auto n_test = static_cast<std::size_t>(std::lround(cfg.test_fraction * static_cast<double>(cfg.contents)));
  if (cfg.test_fraction > 0.0) n_test = std::clamp<std::size_t>(n_test, 1, cfg.contents - 1);
  Rng rng(stream_key({cfg.seed, 0x5B11}));
  for (auto idx : rng.sample_without_replacement(cfg.contents, n_test)) out[idx].split = io::Split::test;
  return out;
}

io::DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& root) {
  const auto contents = plan_contents(cfg);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());

  const std::size_t per_content = cfg.kinds.size() * cfg.levels;
  std::vector<io::ManifestEntry> rows(contents.size() * per_content);
  parallel_for(contents.size(), [&](std::size_t c) {
    const auto& info = contents[c];
    const auto spec = random_content(info.shape, stream_key({cfg.seed, c, 0xC0}));
    const auto base = generate_base_cloud(spec, cfg.points, stream_key({cfg.seed, c, 0xBA5E}), info.name);
    for (std::size_t k = 0; k < cfg.kinds.size(); ++k) {
      for (std::size_t level = 1; level <= cfg.levels; ++level) {
        DistortionSpec d{cfg.kinds[k], level, cfg.levels, cfg.params};
        const auto file = info.name + "_" + std::string(kind_name(d.kind)) + "_" + std::to_string(level) + ".ply";
        auto cloud = apply_distortion(base, d, stream_key({cfg.seed, c, static_cast<std::uint64_t>(d.kind), level}));
        cloud.name = file.substr(0, file.size() - 4);
        try {
          io::write_ply_file(root / file, cloud);
        } catch (const IoError& e) {
          throw IoError(std::string("writing ") + (root / file).string() + ": " + e.what());
        }
        rows[c * per_content + k * cfg.levels + (level - 1)] = {file, root / file, pseudo_mos(d), info.split};
      }
    }
  });
  io::DatasetManifest manifest{std::move(rows)};
  io::write_file((root / "manifest.csv").string(), io::write_manifest(manifest));
  return manifest;
}

}  // namespace copp::data
