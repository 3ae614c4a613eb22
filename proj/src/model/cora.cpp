#include "copp/model/cora.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "copp/errors.hpp"
#include "copp/rng.hpp"

namespace copp::model {

const char* label_name(CorrelationLabel label) {
  switch (label) {
    case CorrelationLabel::strong: return "strong";
    case CorrelationLabel::average: return "average";
    case CorrelationLabel::weak: return "weak";
  }
  return "?";
}

std::array<std::size_t, 3> class_partition(std::size_t patches) {
  if (patches < 3) throw DomainError("correlation labels need at least 3 patches, got " + std::to_string(patches));
  const std::size_t ns = (patches + 2) / 3;
  const std::size_t rest = patches - ns;
  const std::size_t na = (rest + 1) / 2;
  return {ns, na, rest - na};
}

std::vector<CorrelationLabel> build_correlation_labels(std::span<const double> q_patch, double mos) {
  const auto sizes = class_partition(q_patch.size());
  std::vector<std::size_t> order(q_patch.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(q_patch[a] - mos) < std::abs(q_patch[b] - mos);
  });
  std::vector<CorrelationLabel> labels(q_patch.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    labels[order[r]] = r < sizes[0] ? CorrelationLabel::strong
                       : r < sizes[0] + sizes[1] ? CorrelationLabel::average
                                                 : CorrelationLabel::weak;
  }
  return labels;
}

std::vector<int> label_ids(std::span<const CorrelationLabel> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(static_cast<int>(l));
  return out;
}

SoftmaxAxis parse_softmax_axis(const std::string& name) {
  if (name == "class" || name == "classes") return SoftmaxAxis::classes;
  if (name == "patch" || name == "patches") return SoftmaxAxis::patches;
  throw ConfigError("unknown softmax axis '" + name + "' (expected class or patch)");
}

std::vector<double> weights_from_logits(const Tensor& logits, std::span<const double> class_weights,
                                        SoftmaxAxis axis) {
  if (logits.rank() != 2 || logits.cols() != 3) throw DimensionError("weights_from_logits: logits must be C x 3");
  if (class_weights.size() != 3) throw ConfigError("class weights need exactly 3 entries");
  const Tensor p = ad::softmax(logits.detach(), axis == SoftmaxAxis::classes ? 1 : 0);
  std::vector<double> w(logits.rows());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double terms[3] = {p.at(i, 0) * class_weights[0], p.at(i, 1) * class_weights[1],
                             p.at(i, 2) * class_weights[2]};
    w[i] = ad::exact_sum(terms);
  }
  return w;
}

double correlation_weight_pool(std::span<const double> q, std::span<const double> w) {
  if (q.empty()) throw DomainError("correlation_weight_pool: no patches");
  if (q.size() != w.size()) throw DimensionError("correlation_weight_pool: q and w differ in length");
  const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
  const double total = ad::exact_sum(w);
  if (!(total > 0.0)) {
    std::cerr << "correlation_weight_pool: weight total " << total << " is not positive; using the mean\n";
    return std::clamp(ad::exact_sum(q) / static_cast<double>(q.size()), *lo, *hi);
  }
  std::vector<double> wq(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) wq[i] = w[i] * q[i];
  return std::clamp(ad::exact_sum(wq) / total, *lo, *hi);
}

void CoraConfig::validate() const {
  if (input_width == 0 || hidden == 0 || blocks == 0 || heads == 0 || ff_mult == 0) {
    throw ConfigError("cora: widths, blocks and heads must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("cora.hidden (" + std::to_string(hidden) + ") must be divisible by cora.heads (" +
                      std::to_string(heads) + ")");
  }
}

EncoderBlock::EncoderBlock(std::size_t hidden, std::size_t ff_width, Rng& rng)
    : norm1(hidden),
      query(hidden, hidden, rng),
      key(hidden, hidden, rng),
      value(hidden, hidden, rng),
      proj(hidden, hidden, rng),
      norm2(hidden),
      ff1(hidden, ff_width, rng),
      ff2(ff_width, hidden, rng) {}

Tensor EncoderBlock::operator()(const Tensor& x, std::size_t heads, std::size_t group) const {
  const Tensor h = norm1(x);
  const Tensor q = query(h), k = key(h), v = value(h);
  const std::size_t width = x.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Tensor> clouds;
  for (std::size_t r = 0; r < x.rows(); r += group) {
    const Tensor qc = ad::slice_rows(q, r, r + group), kc = ad::slice_rows(k, r, r + group),
                 vc = ad::slice_rows(v, r, r + group);
    std::vector<Tensor> parts;
    for (std::size_t i = 0; i < heads; ++i) {
      const std::size_t a = i * width, b = a + width;
      parts.push_back(ad::attention(ad::slice_cols(qc, a, b), ad::slice_cols(kc, a, b), ad::slice_cols(vc, a, b), scale));
    }
    clouds.push_back(heads == 1 ? parts.front() : ad::concat_cols(parts));
  }
  const Tensor y = ad::add(x, proj(clouds.size() == 1 ? clouds.front() : ad::concat_rows(clouds)));
  return ad::add(y, ff2(ad::leaky_relu(ff1(norm2(y)))));
}

void EncoderBlock::collect(const std::string& prefix, ParameterList& out) {
  norm1.collect(prefix + ".ln1", out);
  query.collect(prefix + ".q", out);
  key.collect(prefix + ".k", out);
  value.collect(prefix + ".v", out);
  proj.collect(prefix + ".proj", out);
  norm2.collect(prefix + ".ln2", out);
  ff1.collect(prefix + ".ff1", out);
  ff2.collect(prefix + ".ff2", out);
}

namespace {

Rng validated_rng(const CoraConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return Rng(stream_key({seed, 'C'}));
}

}  // namespace

CoraNet::CoraNet(const CoraConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng = validated_rng(cfg, seed);
  in1_ = Linear(cfg.input_width, cfg.hidden, rng);
  in2_ = Linear(cfg.hidden, cfg.hidden, rng);
  for (std::size_t b = 0; b < cfg.blocks; ++b) blocks_.emplace_back(cfg.hidden, cfg.hidden * cfg.ff_mult, rng);
  final_norm_ = LayerNorm(cfg.hidden);
  out1_ = Linear(cfg.hidden, cfg.hidden, rng);
  out2_ = Linear(cfg.hidden, 3, rng);
}

Tensor CoraNet::forward(const Tensor& features, std::size_t patches) const {
  if (features.rank() != 2 || features.cols() != cfg_.input_width) {
    throw ConfigError("cora: expected patch features of width " + std::to_string(cfg_.input_width) + ", got " +
                      ad::shape_string(features.shape()));
  }
  if (patches == 0 || features.rows() % patches != 0) {
    throw DimensionError("cora: " + std::to_string(features.rows()) + " rows do not split into clouds of " +
                         std::to_string(patches) + " patches");
  }
  Tensor x = ad::leaky_relu(in2_(ad::leaky_relu(in1_(features))));
  for (const auto& block : blocks_) x = block(x, cfg_.heads, patches);
  return out2_(ad::leaky_relu(out1_(final_norm_(x))));
}

ParameterList CoraNet::parameters() {
  ParameterList list;
  in1_.collect("cora.in1", list);
  in2_.collect("cora.in2", list);
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].collect("cora.block" + std::to_string(b), list);
  final_norm_.collect("cora.ln", list);
  out1_.collect("cora.out1", list);
  out2_.collect("cora.out2", list);
  return list;
}

void CoraNet::save(ad::Checkpoint& ck) {
  ck.put("meta.cora.input_width", static_cast<double>(cfg_.input_width));
  ck.put("meta.cora.hidden", static_cast<double>(cfg_.hidden));
  ck.put("meta.cora.blocks", static_cast<double>(cfg_.blocks));
  ck.put("meta.cora.heads", static_cast<double>(cfg_.heads));
  ck.put("meta.cora.ff_mult", static_cast<double>(cfg_.ff_mult));
  parameters().save(ck);
}

CoraNet CoraNet::load(const ad::Checkpoint& ck) {
  auto sz = [&](const char* key) { return static_cast<std::size_t>(ck.scalar(key)); };
  CoraConfig cfg{sz("meta.cora.input_width"), sz("meta.cora.hidden"), sz("meta.cora.blocks"), sz("meta.cora.heads"),
                 sz("meta.cora.ff_mult")};
  CoraNet net(cfg, 0);
  net.parameters().load(ck);
  return net;
}

}  // namespace copp::model
