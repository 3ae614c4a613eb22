#include "copp/model/arkp.hpp"

#include <memory>
#include <sstream>

#include "copp/errors.hpp"
#include "copp/io/text.hpp"
#include "copp/rng.hpp"

namespace copp::model {

using geometry::PointRows;
using geometry::Vec3;

std::vector<std::size_t> ArkpConfig::level_sizes(std::size_t input_points) const {
  if (levels.empty()) throw ConfigError("arkp: at least one set-abstraction level is required");
  if (pre_conv_width == 0 || d_branch == 0) throw ConfigError("arkp: layer widths must be positive");
  std::vector<std::size_t> sizes;
  std::size_t prev = input_points;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& lv = levels[l];
    if (lv.divisor == 0 || lv.group_k == 0 || lv.widths.empty()) {
      throw ConfigError("arkp: level " + std::to_string(l) + " needs a divisor, a group size and widths");
    }
    for (auto w : lv.widths) {
      if (w == 0) throw ConfigError("arkp: level " + std::to_string(l) + " has a zero width");
    }
    const std::size_t n = input_points / lv.divisor;
    if (n == 0 || n >= prev) {
      throw ConfigError("arkp: level " + std::to_string(l) + " keeps " + std::to_string(n) + " of " +
                        std::to_string(prev) + " points; counts must shrink and stay positive");
    }
    if (lv.group_k > prev) {
      throw ConfigError("arkp: level " + std::to_string(l) + " groups " + std::to_string(lv.group_k) +
                        " neighbors out of " + std::to_string(prev) + " points");
    }
    sizes.push_back(n);
    prev = n;
  }
  return sizes;
}

std::vector<LevelConfig> ArkpConfig::parse_levels(std::string_view text) {
  std::vector<LevelConfig> out;
  for (const auto& item : io::split_on(text, ';')) {
    const auto t = io::trim(item);
    if (t.empty()) continue;
    const auto fields = io::split_on(t, ':');
    if (fields.size() != 3) throw ConfigError("arkp.levels: expected divisor:group_k:widths, got '" + std::string(t) + "'");
    auto count = [&](std::string_view tok) {
      const auto v = io::parse_int(io::trim(tok));
      if (!v || *v < 0) throw ConfigError("arkp.levels: '" + std::string(tok) + "' is not a count");
      return static_cast<std::size_t>(*v);
    };
    LevelConfig lv;
    lv.divisor = count(fields[0]);
    lv.group_k = count(fields[1]);
    for (const auto& w : io::split_on(fields[2], ',')) lv.widths.push_back(count(w));
    out.push_back(std::move(lv));
  }
  if (out.empty()) throw ConfigError("arkp.levels is empty");
  return out;
}

std::string ArkpConfig::levels_string() const {
  std::ostringstream os;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (l) os << ';';
    os << levels[l].divisor << ':' << levels[l].group_k << ':';
    for (std::size_t i = 0; i < levels[l].widths.size(); ++i) os << (i ? "," : "") << levels[l].widths[i];
  }
  return os.str();
}

GroupingPlan plan_grouping(std::span<const Vec3> positions, std::size_t batch, std::size_t n_in, std::size_t n_out,
                           std::size_t group_k, std::span<const std::uint64_t> item_seeds, std::size_t level) {
  if (positions.size() != batch * n_in) throw DimensionError("plan_grouping: position count does not match batch");
  if (item_seeds.size() != batch) throw DimensionError("plan_grouping: one seed per set is required");
  if (n_out == 0 || n_out > n_in || group_k == 0 || group_k > n_in) {
    throw DomainError("plan_grouping: need 0 < n_out <= n_in and 0 < k <= n_in");
  }
  GroupingPlan plan{batch, n_in, n_out, group_k, {}, {}};
  plan.centroids.resize(batch * n_out);
  plan.neighbors.resize(batch * n_out * group_k);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto local = positions.subspan(b * n_in, n_in);
    Rng rng(stream_key({item_seeds[b], level}));
    const auto picks = rng.sample_without_replacement(n_in, n_out);
    std::unique_ptr<geometry::KnnIndex> index;
    if (n_in >= geometry::kBruteForceKnnLimit) index = std::make_unique<geometry::KnnIndex>(local);
    for (std::size_t j = 0; j < n_out; ++j) {
      const std::size_t c = picks[j];
      plan.centroids[b * n_out + j] = b * n_in + c;
      const auto nn = index ? index->query(local[c], group_k) : geometry::knn(local, local[c], group_k);
      std::size_t* dst = plan.neighbors.data() + (b * n_out + j) * group_k;
      for (std::size_t i = 0; i < group_k; ++i) dst[i] = b * n_in + nn[i];
    }
  }
  return plan;
}

LevelOutput set_abstraction(std::span<const Vec3> positions, const Tensor& features, const GroupingPlan& plan,
                            std::vector<PointwiseBlock>& mlp, Mode mode, double coord_scale) {
  if (features.rows() != positions.size()) throw DimensionError("set_abstraction: features and positions disagree");
  const std::size_t groups = plan.centroids.size();
  const std::size_t k = plan.group_k;
  std::vector<double> rel(groups * k * 3);
  LevelOutput out;
  out.positions.reserve(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const Vec3 c = positions[plan.centroids[g]];
    out.positions.push_back(c);
    for (std::size_t i = 0; i < k; ++i) {
      const Vec3 p = positions[plan.neighbors[g * k + i]];
      double* r = rel.data() + (g * k + i) * 3;
      r[0] = (p.x - c.x) * coord_scale;
      r[1] = (p.y - c.y) * coord_scale;
      r[2] = (p.z - c.z) * coord_scale;
    }
  }
  Tensor x = ad::concat_cols({Tensor::from({groups * k, 3}, std::move(rel)), ad::gather_rows(features, plan.neighbors)});
  for (auto& block : mlp) x = block(x, mode);
  out.features = ad::segment_max(x, k);
  return out;
}

ArkpNet::ArkpNet(const ArkpConfig& cfg, Rng& rng) : cfg_(cfg), pre_(ArkpConfig::kInputChannels, cfg.pre_conv_width, rng) {
  std::size_t width = cfg.pre_conv_width;
  for (const auto& lv : cfg.levels) {
    std::vector<PointwiseBlock> mlp;
    std::size_t in = width + 3;
    for (auto w : lv.widths) {
      mlp.emplace_back(in, w, rng);
      in = w;
    }
    levels_.push_back(std::move(mlp));
    width = in;
  }
  post_ = PointwiseBlock(width, cfg.d_branch, rng);
}

Tensor ArkpNet::forward(std::span<const PointRows* const> batch, Mode mode, std::span<const std::uint64_t> item_seeds) {
  if (batch.empty()) throw DomainError("arkp: empty batch");
  if (item_seeds.size() != batch.size()) throw DimensionError("arkp: one seed per batch item is required");
  const std::size_t n = batch.front()->count;
  const auto sizes = cfg_.level_sizes(n);
  std::vector<double> rows;
  rows.reserve(batch.size() * n * PointRows::kWidth);
  std::vector<Vec3> pos;
  pos.reserve(batch.size() * n);
  for (const auto* item : batch) {
    if (item->count != n) throw DimensionError("arkp: all point sets in a batch must have the same size");
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = item->row(i);
      for (std::size_t c = 0; c < PointRows::kWidth; ++c) rows.push_back(r[c] * (c < 3 ? cfg_.coord_scale : cfg_.color_scale));
      pos.push_back(item->position(i));
    }
  }
  Tensor feat = pre_(Tensor::from({batch.size() * n, PointRows::kWidth}, std::move(rows)), mode);
  std::size_t n_in = n;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const auto plan = plan_grouping(pos, batch.size(), n_in, sizes[l], cfg_.levels[l].group_k, item_seeds, l);
    auto level = set_abstraction(pos, feat, plan, levels_[l], mode, cfg_.coord_scale);
    pos = std::move(level.positions);
    feat = level.features;
    n_in = sizes[l];
  }
  return ad::segment_max(post_(feat, mode), n_in);
}

void ArkpNet::collect(const std::string& prefix, ParameterList& out) {
  pre_.collect(prefix + ".pre", out);
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    for (std::size_t i = 0; i < levels_[l].size(); ++i) {
      levels_[l][i].collect(prefix + ".sa" + std::to_string(l) + "." + std::to_string(i), out);
    }
  }
  post_.collect(prefix + ".post", out);
}

Tensor fuse_features(const Tensor& texture, const Tensor& structure) {
  if (texture.rows() != structure.rows()) throw DimensionError("fuse_features: batch sizes differ");
  if (texture.cols() == structure.cols()) return ad::maximum(texture, structure);
  return ad::concat_cols({texture, structure});
}

QualityHead::QualityHead(std::size_t in, std::size_t hidden_width, Rng& rng)
    : hidden(in, hidden_width, rng), norm(hidden_width), out(hidden_width, 1, rng) {}

Tensor QualityHead::operator()(const Tensor& features, Mode mode) {
  const Tensor raw = out(ad::leaky_relu(norm(hidden(features), mode)));
  return ad::add(ad::scale(raw, out_scale), Tensor::full(raw.shape(), out_shift));
}

void QualityHead::collect(const std::string& prefix, ParameterList& out_list) {
  hidden.collect(prefix + ".hidden", out_list);
  norm.collect(prefix + ".bn", out_list);
  out.collect(prefix + ".out", out_list);
}

void PatchModelConfig::validate() const {
  if (head_hidden == 0) throw ConfigError("arkp.head_hidden must be positive");
  arkp.level_sizes(texture_points);
  arkp.level_sizes(structure_points);
}

std::size_t PatchModelConfig::feature_width() const { return arkp.d_branch; }

namespace {

Rng branch_rng(std::uint64_t seed, std::uint64_t branch) { return Rng(stream_key({seed, branch})); }

std::vector<std::uint64_t> branch_seeds(std::span<const std::uint64_t> seeds, std::uint64_t branch) {
  std::vector<std::uint64_t> out;
  out.reserve(seeds.size());
  for (auto s : seeds) out.push_back(stream_key({s, branch}));
  return out;
}

ArkpNet make_branch(const ArkpConfig& cfg, std::uint64_t seed, std::uint64_t branch) {
  auto rng = branch_rng(seed, branch);
  return ArkpNet(cfg, rng);
}

QualityHead make_head(const PatchModelConfig& cfg, std::uint64_t seed) {
  auto rng = branch_rng(seed, 'H');
  return QualityHead(cfg.feature_width(), cfg.head_hidden, rng);
}

}  // namespace

PatchQualityModel::PatchQualityModel(const PatchModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      texture_(make_branch(cfg.arkp, seed, 'T')),
      structure_(make_branch(cfg.arkp, seed, 'S')),
      head_(make_head(cfg, seed)) {}

PatchOutput PatchQualityModel::forward(std::span<const PatchInput* const> batch, Mode mode,
                                       std::span<const std::uint64_t> item_seeds) {
  std::vector<const PointRows*> tex, str;
  for (const auto* p : batch) {
    tex.push_back(&p->texture);
    str.push_back(&p->structure);
  }
  const Tensor ft = texture_.forward(tex, mode, branch_seeds(item_seeds, 'T'));
  const Tensor fs = structure_.forward(str, mode, branch_seeds(item_seeds, 'S'));
  Tensor fused = fuse_features(ft, fs);
  Tensor q = head_(fused, mode);
  return {fused, q};
}

ParameterList PatchQualityModel::parameters() {
  ParameterList list;
  texture_.collect("texture", list);
  structure_.collect("structure", list);
  head_.collect("head", list);
  return list;
}

void PatchQualityModel::save(ad::Checkpoint& ck) {
  std::vector<double> levels;
  for (const auto& lv : cfg_.arkp.levels) {
    levels.push_back(static_cast<double>(lv.divisor));
    levels.push_back(static_cast<double>(lv.group_k));
    levels.push_back(static_cast<double>(lv.widths.size()));
    for (auto w : lv.widths) levels.push_back(static_cast<double>(w));
  }
  ck.put("meta.arkp.levels", {levels.size()}, levels);
  ck.put("meta.arkp.pre_conv_width", static_cast<double>(cfg_.arkp.pre_conv_width));
  ck.put("meta.arkp.d_branch", static_cast<double>(cfg_.arkp.d_branch));
  ck.put("meta.arkp.coord_scale", cfg_.arkp.coord_scale);
  ck.put("meta.arkp.color_scale", cfg_.arkp.color_scale);
  ck.put("meta.arkp.head_hidden", static_cast<double>(cfg_.head_hidden));
  ck.put("meta.texture_points", static_cast<double>(cfg_.texture_points));
  ck.put("meta.structure_points", static_cast<double>(cfg_.structure_points));
  ck.put("meta.head.out_scale", head_.out_scale);
  ck.put("meta.head.out_shift", head_.out_shift);
  parameters().save(ck);
}

PatchQualityModel PatchQualityModel::load(const ad::Checkpoint& ck) {
  auto as_size = [](double v) { return static_cast<std::size_t>(v); };
  PatchModelConfig cfg;
  cfg.arkp.levels.clear();
  const auto& flat = ck.get("meta.arkp.levels").data;
  for (std::size_t i = 0; i < flat.size();) {
    if (i + 3 > flat.size()) throw IoError("checkpoint: truncated level metadata");
    LevelConfig lv{as_size(flat[i]), as_size(flat[i + 1]), {}};
    const std::size_t nw = as_size(flat[i + 2]);
    i += 3;
    if (i + nw > flat.size()) throw IoError("checkpoint: truncated level metadata");
    for (std::size_t j = 0; j < nw; ++j) lv.widths.push_back(as_size(flat[i + j]));
    i += nw;
    cfg.arkp.levels.push_back(std::move(lv));
  }
  cfg.arkp.pre_conv_width = as_size(ck.scalar("meta.arkp.pre_conv_width"));
  cfg.arkp.d_branch = as_size(ck.scalar("meta.arkp.d_branch"));
  cfg.arkp.coord_scale = ck.scalar("meta.arkp.coord_scale");
  cfg.arkp.color_scale = ck.scalar("meta.arkp.color_scale");
  cfg.head_hidden = as_size(ck.scalar("meta.arkp.head_hidden"));
  cfg.texture_points = as_size(ck.scalar("meta.texture_points"));
  cfg.structure_points = as_size(ck.scalar("meta.structure_points"));
  PatchQualityModel model(cfg, 0);
  model.head().out_scale = ck.scalar("meta.head.out_scale");
  model.head().out_shift = ck.scalar("meta.head.out_shift");
  model.parameters().load(ck);
  return model;
}

}  // namespace copp::model
