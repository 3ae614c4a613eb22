#include "copp/train/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "copp/autodiff/optim.hpp"
#include "copp/errors.hpp"
#include "copp/io/ply.hpp"
#include "copp/io/text.hpp"
#include "copp/parallel.hpp"
#include "copp/rng.hpp"
#include "copp/train/metrics.hpp"

namespace copp::train {

using ad::Tensor;

Pooling parse_pooling(const std::string& name) {
  if (name == "average" || name == "ave") return Pooling::average;
  if (name == "cora") return Pooling::cora;
  throw ConfigError("unknown pooling '" + name + "' (expected average or cora)");
}

const char* pooling_name(Pooling p) { return p == Pooling::average ? "average" : "cora"; }

void TrainConfig::validate() const {
  if (stage1_batch == 0 || stage2_batch == 0) throw ConfigError("train batch sizes must be at least 1");
  if (stage1_epochs == 0 || stage2_epochs == 0) throw ConfigError("train epochs must be at least 1");
  if (!(stage1_lr > 0.0) || !(stage2_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must lie in [0, 1)");
}

PipelineConfig PipelineConfig::from(const Config& cfg, std::uint64_t seed) {
  PipelineConfig p;
  p.sampler.patches = cfg.get_size("sampler.C");
  p.sampler.patch_size = cfg.get_size("sampler.K");
  p.sampler.texture_points = cfg.get_size("sampler.R_t");
  p.sampler.structure_points = cfg.get_size("sampler.R_s");
  p.sampler.radius = cfg.get_double("sampler.radius");
  p.sampler.seed = seed;

  p.patch_model.arkp.levels = model::ArkpConfig::parse_levels(cfg.get("arkp.levels"));
  p.patch_model.arkp.pre_conv_width = cfg.get_size("arkp.pre_conv");
  p.patch_model.arkp.d_branch = cfg.get_size("arkp.d_branch");
  p.patch_model.arkp.coord_scale = 1.0 / p.sampler.radius;
  p.patch_model.head_hidden = cfg.get_size("arkp.head_hidden");
  p.patch_model.texture_points = p.sampler.texture_points;
  p.patch_model.structure_points = p.sampler.structure_points;

  p.cora.input_width = p.patch_model.feature_width();
  p.cora.hidden = cfg.get_size("cora.hidden");
  p.cora.blocks = cfg.get_size("cora.blocks");
  p.cora.heads = cfg.get_size("cora.heads");
  p.cora.ff_mult = cfg.get_size("cora.ff_mult");
  p.class_weights = cfg.get_doubles("cora.class_weights");
  p.softmax_axis = model::parse_softmax_axis(cfg.get("cora.softmax_axis"));

  p.train.stage1_batch = cfg.get_size("train.stage1_batch");
  p.train.stage2_batch = cfg.get_size("train.stage2_batch");
  p.train.stage1_lr = cfg.get_double("train.lr");
  p.train.stage2_lr = cfg.get_double("train.stage2_lr");
  p.train.momentum = cfg.get_double("train.momentum");
  p.train.stage1_epochs = cfg.get_size("train.epochs1");
  p.train.stage2_epochs = cfg.get_size("train.epochs2");
  p.train.patience = cfg.get_size("train.patience");
  p.train.min_delta = cfg.get_double("train.min_delta");
  p.train.rotate = cfg.get_size("train.rotate") != 0;
  p.train.pooling = parse_pooling(cfg.get("train.pooling"));
  p.train.seed = seed;

  p.mos_scale = {cfg.get_double("data.mos_min"), cfg.get_double("data.mos_max")};
  p.validate();
  return p;
}

void PipelineConfig::validate() const {
  sampler.validate();
  if (patch_model.texture_points != sampler.texture_points || patch_model.structure_points != sampler.structure_points) {
    throw ConfigError("network input sizes disagree with sampler.R_t / sampler.R_s");
  }
  patch_model.validate();
  cora.validate();
  if (cora.input_width != patch_model.feature_width()) {
    throw ConfigError("cora input width " + std::to_string(cora.input_width) + " does not match patch feature width " +
                      std::to_string(patch_model.feature_width()));
  }
  if (class_weights.size() != 3) throw ConfigError("cora.class_weights needs exactly 3 values");
  for (double w : class_weights) {
    if (!(w > 0.0)) throw ConfigError("cora.class_weights must be positive");
  }
  train.validate();
  if (!(mos_scale.max > mos_scale.min)) throw ConfigError("data.mos_max must exceed data.mos_min");
}

CloudPatches prepare_cloud(const PointCloud& cloud, double mos, const geometry::SamplerConfig& sampler) {
  CloudPatches out;
  out.name = cloud.name;
  out.mos = mos;
  const auto patches = geometry::extract_patches(cloud, sampler);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    out.centers.push_back(patches[i].center_index);
    out.patches.push_back({geometry::sample_texture_input(patches[i], sampler.texture_points),
                           geometry::sample_structure_input(patches[i], sampler.structure_points,
                                                            geometry::structure_seed(sampler.seed, cloud.name, i))});
  }
  return out;
}

ad::Checkpoint cache_to_checkpoint(const CloudPatches& cloud, const geometry::SamplerConfig& sampler) {
  ad::Checkpoint ck;
  ck.put("meta.cache_version", kCacheVersion);
  ck.put("meta.C", static_cast<double>(sampler.patches));
  ck.put("meta.K", static_cast<double>(sampler.patch_size));
  ck.put("meta.R_t", static_cast<double>(sampler.texture_points));
  ck.put("meta.R_s", static_cast<double>(sampler.structure_points));
  ck.put("meta.radius", sampler.radius);
  // Seeds above 2^53 would not survive the fp64 payload; store both halves.
  ck.put("meta.seed", {2}, {static_cast<double>(sampler.seed >> 32), static_cast<double>(sampler.seed & 0xffffffffULL)});
  ck.put("meta.mos", cloud.mos);
  for (std::size_t i = 0; i < cloud.patches.size(); ++i) {
    const auto prefix = "patch" + std::to_string(i);
    const auto& p = cloud.patches[i];
    ck.put(prefix + ".center", static_cast<double>(cloud.centers[i]));
    ck.put(prefix + ".texture", {p.texture.count, geometry::PointRows::kWidth}, p.texture.values);
    ck.put(prefix + ".structure", {p.structure.count, geometry::PointRows::kWidth}, p.structure.values);
  }
  return ck;
}

CloudPatches cache_from_checkpoint(const ad::Checkpoint& ck, const std::string& name,
                                   const geometry::SamplerConfig& sampler) {
  if (!ck.contains("meta.cache_version") || ck.scalar("meta.cache_version") != kCacheVersion) {
    throw ConfigError("patch cache for '" + name + "' has an unsupported version");
  }
  const auto& seed = ck.get("meta.seed").data;
  const std::uint64_t cached_seed =
      (static_cast<std::uint64_t>(seed.at(0)) << 32) | static_cast<std::uint64_t>(seed.at(1));
  if (ck.scalar("meta.C") != static_cast<double>(sampler.patches) ||
      ck.scalar("meta.K") != static_cast<double>(sampler.patch_size) ||
      ck.scalar("meta.R_t") != static_cast<double>(sampler.texture_points) ||
      ck.scalar("meta.R_s") != static_cast<double>(sampler.structure_points) ||
      ck.scalar("meta.radius") != sampler.radius || cached_seed != sampler.seed) {
    throw ConfigError("patch cache for '" + name + "' was built with different sampler settings");
  }
  CloudPatches out;
  out.name = name;
  out.mos = ck.scalar("meta.mos");
  for (std::size_t i = 0; i < sampler.patches; ++i) {
    const auto prefix = "patch" + std::to_string(i);
    out.centers.push_back(static_cast<std::size_t>(ck.scalar(prefix + ".center")));
    const auto& t = ck.get(prefix + ".texture");
    const auto& s = ck.get(prefix + ".structure");
    out.patches.push_back({{t.shape.at(0), t.data}, {s.shape.at(0), s.data}});
  }
  return out;
}

std::filesystem::path cache_path(const std::filesystem::path& dir, const io::ManifestEntry& entry) {
  return dir / (entry.path.stem().string() + ".patches");
}

namespace {

CloudPatches read_and_prepare(const io::ManifestEntry& entry, const geometry::SamplerConfig& sampler) {
  auto cloud = io::read_ply_file(entry.path);
  cloud.name = entry.path.stem().string();
  return prepare_cloud(cloud, entry.mos, sampler);
}

}  // namespace

void build_patch_cache(const std::vector<io::ManifestEntry>& entries, const geometry::SamplerConfig& sampler,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  parallel_for(entries.size(), [&](std::size_t i) {
    cache_to_checkpoint(read_and_prepare(entries[i], sampler), sampler).save(cache_path(dir, entries[i]));
  });
}

std::vector<CloudPatches> load_patches(const std::vector<io::ManifestEntry>& entries,
                                       const geometry::SamplerConfig& sampler, const std::filesystem::path& dir) {
  std::vector<CloudPatches> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& e = entries[i];
    if (!dir.empty() && std::filesystem::exists(cache_path(dir, e))) {
      out[i] = cache_from_checkpoint(ad::Checkpoint::load(cache_path(dir, e)), e.path.stem().string(), sampler);
      out[i].mos = e.mos;
    } else {
      out[i] = read_and_prepare(e, sampler);
    }
  });
  return out;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t key) {
  Rng rng(key);
  return rng.sample_without_replacement(n, n);
}

/// Epoch losses; returns true when early stopping triggers.
bool should_stop(const std::vector<double>& losses, std::size_t patience, double min_delta) {
  if (patience == 0 || losses.size() <= patience) return false;
  for (std::size_t i = losses.size() - patience; i < losses.size(); ++i) {
    const double prev = losses[i - 1];
    if (prev - losses[i] > min_delta * std::abs(prev)) return false;
  }
  return true;
}

}  // namespace

Stage1Result train_stage1(const std::vector<CloudPatches>& train, const PipelineConfig& cfg, const EpochLog& log) {
  cfg.validate();
  if (train.empty()) throw DomainError("stage 1: the training split is empty");
  struct Item {
    std::size_t cloud, patch;
  };
  std::vector<Item> items;
  std::vector<double> mos;
  for (std::size_t c = 0; c < train.size(); ++c) {
    mos.push_back(train[c].mos);
    for (std::size_t p = 0; p < train[c].patches.size(); ++p) items.push_back({c, p});
  }
  if (items.size() < 2) throw DomainError("stage 1 needs at least two training patches");

  const std::size_t batch = std::min(cfg.train.stage1_batch, items.size());
  // A trailing batch of one patch has no batch statistics; it is dropped.
  const std::size_t tail = items.size() % batch;
  const std::size_t per_epoch = items.size() / batch + (tail > 1 ? 1 : 0);

  model::PatchQualityModel net(cfg.patch_model, stream_key({cfg.train.seed, 'M', '1'}));
  // The head learns standardized scores; the fixed output map restores MOS units.
  const double mos_mean = ad::exact_sum(mos) / static_cast<double>(mos.size());
  std::vector<double> dev(mos.size());
  for (std::size_t i = 0; i < mos.size(); ++i) dev[i] = (mos[i] - mos_mean) * (mos[i] - mos_mean);
  const double mos_std = std::sqrt(ad::exact_sum(dev) / static_cast<double>(mos.size()));
  net.head().out_shift = mos_mean;
  net.head().out_scale = mos_std > 0.0 ? mos_std : 1.0;
  const double loss_scale = 1.0 / (net.head().out_scale * net.head().out_scale);

  ad::OptimizerState state;
  state.base_lr = cfg.train.stage1_lr;
  state.momentum = cfg.train.momentum;
  state.total_steps = per_epoch * cfg.train.stage1_epochs;
  ad::Sgd sgd(net.parameters().tensors(), state);

  Stage1Result result{std::move(net), {}};
  auto& model = result.model;
  for (std::size_t epoch = 0; epoch < cfg.train.stage1_epochs; ++epoch) {
    const auto order = shuffled(items.size(), stream_key({cfg.train.seed, epoch, 'P'}));
    std::vector<double> batch_loss;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * batch, end = std::min(begin + batch, items.size());
      std::vector<const model::PatchInput*> inputs;
      std::vector<model::PatchInput> rotated;
      rotated.reserve(end - begin);
      std::vector<std::uint64_t> seeds;
      std::vector<double> target;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& it = items[order[i]];
        const auto& patch = train[it.cloud].patches[it.patch];
        if (cfg.train.rotate) {
          const auto m = geometry::random_rotation(stream_key({cfg.train.seed, epoch, it.cloud, it.patch, 'A'}));
          rotated.push_back({geometry::rotate_rows(patch.texture, m), geometry::rotate_rows(patch.structure, m)});
          inputs.push_back(&rotated.back());
        } else {
          inputs.push_back(&patch);
        }
        seeds.push_back(stream_key({cfg.train.seed, epoch, it.cloud, it.patch, 'R'}));
        target.push_back(train[it.cloud].mos);
      }
      sgd.zero_grad();
      const auto out = model.forward(inputs, ad::Mode::train, seeds);
      const Tensor mse = ad::mse_loss(out.quality, Tensor::from({target.size(), 1}, target));
      // Same minimizer as the MOS-unit MSE; the step size acts on standardized units.
      ad::scale(mse, loss_scale).backward();
      sgd.step();
      batch_loss.push_back(mse.item() * static_cast<double>(target.size()));
      seen += target.size();
    }
    const double epoch_loss = ad::exact_sum(batch_loss) / static_cast<double>(seen);
    result.epoch_loss.push_back(epoch_loss);
    if (log) log(epoch, epoch_loss);
    if (should_stop(result.epoch_loss, cfg.train.patience, cfg.train.min_delta)) break;
  }
  return result;
}

std::uint64_t eval_seed(std::uint64_t seed, const std::string& name, std::size_t patch) {
  return stream_key({seed, hash_string(name), patch, 'E'});
}

PatchPredictions predict_patches(model::PatchQualityModel& model, const CloudPatches& cloud, std::uint64_t seed) {
  if (cloud.patches.empty()) throw DomainError("cloud '" + cloud.name + "' has no patches");
  std::vector<const model::PatchInput*> inputs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cloud.patches.size(); ++i) {
    inputs.push_back(&cloud.patches[i]);
    seeds.push_back(eval_seed(seed, cloud.name, i));
  }
  const auto out = model.forward(inputs, ad::Mode::eval, seeds);
  return {out.features.detach(), std::vector<double>(out.quality.data().begin(), out.quality.data().end())};
}

namespace {

struct CloudTarget {
  Tensor features;
  std::vector<int> labels;
};

std::vector<CloudTarget> stage2_targets(const std::vector<CloudPatches>& clouds, model::PatchQualityModel& stage1,
                                        std::uint64_t seed) {
  std::vector<CloudTarget> out(clouds.size());
  parallel_for(clouds.size(), [&](std::size_t i) {
    auto pred = predict_patches(stage1, clouds[i], seed);
    const auto labels = model::build_correlation_labels(pred.quality, clouds[i].mos);
    out[i] = {pred.features, model::label_ids(labels)};
  });
  return out;
}

std::size_t argmax_row(const Tensor& logits, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.cols(); ++c) {
    if (logits.at(r, c) > logits.at(r, best)) best = c;
  }
  return best;
}

double accuracy_of(const std::vector<CloudTarget>& targets, const model::CoraNet& cora) {
  std::size_t hit = 0, total = 0;
  for (const auto& t : targets) {
    const Tensor logits = cora.forward(t.features);
    for (std::size_t r = 0; r < t.labels.size(); ++r) {
      hit += argmax_row(logits, r) == static_cast<std::size_t>(t.labels[r]);
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace

Stage2Result train_stage2(const std::vector<CloudPatches>& train, model::PatchQualityModel& stage1,
                          const PipelineConfig& cfg, const EpochLog& log) {
  cfg.validate();
  if (train.empty()) throw DomainError("stage 2: the training split is empty");
  if (stage1.config().feature_width() != cfg.cora.input_width) {
    throw ConfigError("stage-1 feature width does not match cora input width");
  }
  for (const auto& c : train) {
    if (c.patches.size() != cfg.sampler.patches) {
      throw ConfigError("cloud '" + c.name + "' has " + std::to_string(c.patches.size()) + " patches, expected C=" +
                        std::to_string(cfg.sampler.patches));
    }
  }
  const auto targets = stage2_targets(train, stage1, cfg.train.seed);

  const std::size_t batch = std::min(cfg.train.stage2_batch, targets.size());
  const std::size_t per_epoch = (targets.size() + batch - 1) / batch;
  model::CoraNet cora(cfg.cora, stream_key({cfg.train.seed, 'M', '2'}));
  ad::OptimizerState state;
  state.base_lr = cfg.train.stage2_lr;
  state.momentum = cfg.train.momentum;
  state.total_steps = per_epoch * cfg.train.stage2_epochs;
  ad::Sgd sgd(cora.parameters().tensors(), state);

  Stage2Result result{std::move(cora), {}, 0.0};
  for (std::size_t epoch = 0; epoch < cfg.train.stage2_epochs; ++epoch) {
    const auto order = shuffled(targets.size(), stream_key({cfg.train.seed, epoch, 'Q'}));
    std::vector<double> batch_loss;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * batch, end = std::min(begin + batch, targets.size());
      std::vector<Tensor> features;
      std::vector<int> labels;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& t = targets[order[i]];
        features.push_back(t.features);
        labels.insert(labels.end(), t.labels.begin(), t.labels.end());
      }
      sgd.zero_grad();
      const Tensor logits = result.cora.forward(ad::concat_rows(features), cfg.sampler.patches);
      const Tensor loss = ad::cross_entropy(logits, labels);
      loss.backward();
      sgd.step();
      batch_loss.push_back(loss.item() * static_cast<double>(end - begin));
      seen += end - begin;
    }
    const double epoch_loss = ad::exact_sum(batch_loss) / static_cast<double>(seen);
    result.epoch_loss.push_back(epoch_loss);
    if (log) log(epoch, epoch_loss);
    if (should_stop(result.epoch_loss, cfg.train.patience, cfg.train.min_delta)) break;
  }
  result.train_accuracy = accuracy_of(targets, result.cora);
  return result;
}

double label_accuracy(const std::vector<CloudPatches>& clouds, model::PatchQualityModel& stage1,
                      const model::CoraNet& cora, std::uint64_t seed) {
  return accuracy_of(stage2_targets(clouds, stage1, seed), cora);
}

QualityRecord predict(const CloudPatches& cloud, model::PatchQualityModel& stage1, const model::CoraNet* cora,
                      Pooling pooling, const PipelineConfig& cfg) {
  const auto pred = predict_patches(stage1, cloud, cfg.train.seed);
  QualityRecord rec;
  rec.name = cloud.name;
  rec.mos = cloud.mos;
  rec.q_patch = pred.quality;
  if (rec.q_patch.size() >= 3) rec.labels = model::build_correlation_labels(rec.q_patch, cloud.mos);
  if (pooling == Pooling::cora) {
    if (!cora) throw ConfigError("cora pooling requires a stage-2 checkpoint");
    rec.w_patch = model::weights_from_logits(cora->forward(pred.features), cfg.class_weights, cfg.softmax_axis);
  } else {
    rec.w_patch.assign(rec.q_patch.size(), 1.0);
  }
  rec.q_pc = model::correlation_weight_pool(rec.q_patch, rec.w_patch);
  return rec;
}

EvalReport evaluate(const std::vector<CloudPatches>& clouds, model::PatchQualityModel& stage1,
                    const model::CoraNet* cora, Pooling pooling, const PipelineConfig& cfg) {
  if (clouds.empty()) throw DomainError("evaluate: the split is empty");
  EvalReport report;
  report.pooling = pooling;
  report.records.resize(clouds.size());
  parallel_for(clouds.size(), [&](std::size_t i) { report.records[i] = predict(clouds[i], stage1, cora, pooling, cfg); });
  std::vector<double> mos, q;
  for (const auto& r : report.records) {
    mos.push_back(r.mos);
    q.push_back(r.q_pc);
  }
  report.rmse = rmse(q, mos);
  report.plcc = plcc(q, mos);
  report.srcc = srcc(q, mos);
  return report;
}

std::string write_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "name,mos,q_pc,abs_err\n";
  for (const auto& r : report.records) {
    os << r.name << ',' << io::format_double(r.mos) << ',' << io::format_double(r.q_pc) << ','
       << io::format_double(std::abs(r.q_pc - r.mos)) << '\n';
  }
  os << "# plcc=" << io::format_double(report.plcc) << ",srcc=" << io::format_double(report.srcc)
     << ",rmse=" << io::format_double(report.rmse) << '\n';
  return os.str();
}

std::string write_patch_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "name,patch,q_patch,w_patch\n";
  for (const auto& r : report.records) {
    for (std::size_t i = 0; i < r.q_patch.size(); ++i) {
      os << r.name << ',' << i << ',' << io::format_double(r.q_patch[i]) << ',' << io::format_double(r.w_patch[i])
         << '\n';
    }
  }
  return os.str();
}

ParsedReport parse_report_csv(std::string_view text) {
  const auto lines = io::split_lines(text);
  if (lines.empty() || io::trim(lines[0]) != "name,mos,q_pc,abs_err") {
    throw ParseError(1, "report header must be name,mos,q_pc,abs_err");
  }
  auto number = [](std::string_view tok, std::size_t line) {
    const auto v = io::parse_double(io::trim(tok));
    if (!v) throw ParseError(line, "'" + std::string(tok) + "' is not a number");
    return *v;
  };
  ParsedReport out;
  bool summary = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      for (const auto& kv : io::split_on(io::trim(line.substr(1)), ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) throw ParseError(i + 1, "malformed summary field");
        const auto key = io::trim(kv.substr(0, eq));
        const double v = number(kv.substr(eq + 1), i + 1);
        if (key == "plcc") out.plcc = v;
        else if (key == "srcc") out.srcc = v;
        else if (key == "rmse") out.rmse = v;
        else throw ParseError(i + 1, "unknown summary field '" + std::string(key) + "'");
      }
      summary = true;
      continue;
    }
    const auto f = io::split_on(line, ',');
    if (f.size() != 4) throw ParseError(i + 1, "expected 4 fields");
    out.rows.push_back({std::string(f[0]), number(f[1], i + 1), number(f[2], i + 1), number(f[3], i + 1)});
  }
  if (!summary) throw ParseError(lines.size(), "missing '# plcc=...' summary line");
  return out;
}

}  // namespace copp::train
