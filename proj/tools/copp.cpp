// copp: command-line front end for dataset generation, patch extraction,
// two-stage training, evaluation, prediction and the self-check suites.
//
// Exit status: 0 success, 1 usage error, 2 data or validation error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "copp/check/suites.hpp"
#include "copp/config.hpp"
#include "copp/data/synthetic.hpp"
#include "copp/errors.hpp"
#include "copp/io/manifest.hpp"
#include "copp/io/ply.hpp"
#include "copp/io/text.hpp"
#include "copp/train/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace copp;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool json = false;
};

struct Options {
  Common common;
  std::string out, manifest, cache, stage1, cora, cloud, pooling, split = "test", extract_split = "all";
  std::size_t instances = 1000;
};

Config load_config(const Common& c) {
  auto cfg = Config::defaults();
  if (!c.config_path.empty()) cfg.merge_file(c.config_path);
  for (const auto& o : c.overrides) cfg.merge_override(o);
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override one key, e.g. --set train.epochs1=5");
  cmd->add_option("--seed", c.seed, "seed for every random choice");
  cmd->add_flag("--json", c.json, "print one JSON object instead of tables");
}

void emit(const Common& c, const json& j, const std::string& text) {
  if (c.json) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

io::MosScale mos_scale(const Config& cfg) { return {cfg.get_double("data.mos_min"), cfg.get_double("data.mos_max")}; }

std::vector<io::ManifestEntry> entries_for(const io::DatasetManifest& m, const std::string& split) {
  if (split == "all") return m.entries;
  const auto s = io::parse_split(split);
  if (!s) throw ConfigError("unknown split '" + split + "' (expected train, test or all)");
  auto out = m.select(*s);
  if (out.empty()) throw DomainError("the " + split + " split of the manifest is empty");
  return out;
}

void put_sampler_meta(ad::Checkpoint& ck, const train::PipelineConfig& p) {
  ck.put("meta.sampler.C", static_cast<double>(p.sampler.patches));
}

void check_sampler_meta(const ad::Checkpoint& ck, const train::PipelineConfig& p, const std::string& what) {
  const auto c = static_cast<std::size_t>(ck.scalar("meta.sampler.C"));
  if (c != p.sampler.patches) {
    throw ConfigError(what + " checkpoint was trained with C=" + std::to_string(c) + " but the config has sampler.C=" +
                      std::to_string(p.sampler.patches));
  }
}

model::PatchQualityModel load_stage1(const std::string& path, const train::PipelineConfig& p) {
  const auto ck = ad::Checkpoint::load(path);
  check_sampler_meta(ck, p, "stage-1");
  auto m = model::PatchQualityModel::load(ck);
  if (m.config().texture_points != p.sampler.texture_points ||
      m.config().structure_points != p.sampler.structure_points) {
    throw ConfigError("stage-1 checkpoint input sizes do not match sampler.R_t / sampler.R_s");
  }
  return m;
}

std::optional<model::CoraNet> load_cora(const std::string& path, const train::PipelineConfig& p) {
  if (path.empty()) return std::nullopt;
  const auto ck = ad::Checkpoint::load(path);
  check_sampler_meta(ck, p, "stage-2");
  return model::CoraNet::load(ck);
}

train::EpochLog epoch_logger(const Common& c, const char* stage) {
  return [&c, stage](std::size_t epoch, double loss) {
    if (!c.json) std::cerr << stage << " epoch " << epoch + 1 << " loss " << io::format_double(loss) << '\n';
  };
}

int cmd_gen_data(const Options& o) {
  const auto cfg = load_config(o.common);
  const auto dcfg = data::DatasetConfig::from(cfg, o.common.seed);
  const auto manifest = data::build_dataset(dcfg, o.out);
  std::size_t test = 0;
  for (const auto& e : manifest.entries) test += e.split == io::Split::test;
  json j = {{"command", "gen-data"}, {"out", o.out}, {"files", manifest.entries.size()},
            {"train", manifest.entries.size() - test}, {"test", test}};
  std::ostringstream os;
  os << "wrote " << manifest.entries.size() << " clouds (" << manifest.entries.size() - test << " train, " << test
     << " test) and manifest.csv to " << o.out << '\n';
  emit(o.common, j, os.str());
  return 0;
}

int cmd_extract(const Options& o) {
  const auto cfg = load_config(o.common);
  const auto p = train::PipelineConfig::from(cfg, o.common.seed);
  const auto manifest = io::load_manifest(o.manifest, mos_scale(cfg));
  const auto entries = entries_for(manifest, o.extract_split);
  train::build_patch_cache(entries, p.sampler, o.out);
  json j = {{"command", "extract-patches"}, {"out", o.out}, {"clouds", entries.size()}, {"patches_per_cloud", p.sampler.patches}};
  emit(o.common, j, "cached " + std::to_string(entries.size()) + " clouds x " + std::to_string(p.sampler.patches) +
                        " patches in " + o.out + '\n');
  return 0;
}

int cmd_train_stage1(const Options& o) {
  const auto cfg = load_config(o.common);
  const auto p = train::PipelineConfig::from(cfg, o.common.seed);
  const auto manifest = io::load_manifest(o.manifest, mos_scale(cfg));
  const auto clouds = train::load_patches(entries_for(manifest, "train"), p.sampler, o.cache);
  auto result = train::train_stage1(clouds, p, epoch_logger(o.common, "stage1"));
  ad::Checkpoint ck;
  put_sampler_meta(ck, p);
  result.model.save(ck);
  ck.save(o.out);
  json j = {{"command", "train-stage1"}, {"out", o.out}, {"clouds", clouds.size()}, {"epoch_loss", result.epoch_loss}};
  emit(o.common, j, "stage-1 checkpoint written to " + o.out + " (final loss " +
                        io::format_double(result.epoch_loss.back()) + ")\n");
  return 0;
}

int cmd_train_stage2(const Options& o) {
  const auto cfg = load_config(o.common);
  const auto p = train::PipelineConfig::from(cfg, o.common.seed);
  auto stage1 = load_stage1(o.stage1, p);
  const auto manifest = io::load_manifest(o.manifest, mos_scale(cfg));
  const auto clouds = train::load_patches(entries_for(manifest, "train"), p.sampler, o.cache);
  auto result = train::train_stage2(clouds, stage1, p, epoch_logger(o.common, "stage2"));
  ad::Checkpoint ck;
  put_sampler_meta(ck, p);
  result.cora.save(ck);
  ck.save(o.out);
  json j = {{"command", "train-stage2"}, {"out", o.out},           {"clouds", clouds.size()},
            {"epoch_loss", result.epoch_loss}, {"train_accuracy", result.train_accuracy}};
  emit(o.common, j, "stage-2 checkpoint written to " + o.out + " (train label accuracy " +
                        io::format_double(result.train_accuracy) + ")\n");
  return 0;
}

train::Pooling pooling_of(const Options& o, const Config& cfg) {
  return train::parse_pooling(o.pooling.empty() ? cfg.get("train.pooling") : o.pooling);
}

fs::path patch_csv_path(const fs::path& report) {
  return report.parent_path() / (report.stem().string() + ".patches.csv");
}

int cmd_evaluate(const Options& o) {
  const auto cfg = load_config(o.common);
  const auto p = train::PipelineConfig::from(cfg, o.common.seed);
  const auto pooling = pooling_of(o, cfg);
  auto stage1 = load_stage1(o.stage1, p);
  const auto cora = load_cora(o.cora, p);
  if (pooling == train::Pooling::cora && !cora) throw ConfigError("--pooling cora needs --cora");
  const auto manifest = io::load_manifest(o.manifest, mos_scale(cfg));
  const auto clouds = train::load_patches(entries_for(manifest, o.split), p.sampler, o.cache);
  const auto report = train::evaluate(clouds, stage1, cora ? &*cora : nullptr, pooling, p);
  if (!o.out.empty()) {
    io::write_file(o.out, train::write_report_csv(report));
    io::write_file(patch_csv_path(o.out).string(), train::write_patch_csv(report));
  }
  json j = {{"command", "evaluate"}, {"pooling", train::pooling_name(pooling)}, {"split", o.split},
            {"clouds", report.records.size()}, {"plcc", report.plcc}, {"srcc", report.srcc}, {"rmse", report.rmse}};
  if (!o.out.empty()) j["report"] = o.out;
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << train::pooling_name(pooling) << " pooling on " << report.records.size()
     << " " << o.split << " clouds: PLCC " << report.plcc << "  SRCC " << report.srcc << "  RMSE " << report.rmse
     << '\n';
  emit(o.common, j, os.str());
  return 0;
}

int cmd_predict(const Options& o) {
  const auto cfg = load_config(o.common);
  const auto p = train::PipelineConfig::from(cfg, o.common.seed);
  const auto pooling = pooling_of(o, cfg);
  auto stage1 = load_stage1(o.stage1, p);
  const auto cora = load_cora(o.cora, p);
  if (pooling == train::Pooling::cora && !cora) throw ConfigError("--pooling cora needs --cora");
  auto cloud = io::read_ply_file(o.cloud);
  cloud.name = fs::path(o.cloud).stem().string();
  const auto patches = train::prepare_cloud(cloud, 0.0, p.sampler);
  const auto rec = train::predict(patches, stage1, cora ? &*cora : nullptr, pooling, p);
  json rows = json::array();
  std::ostringstream os;
  os << "cloud " << rec.name << "  pooling " << train::pooling_name(pooling) << "  q_pc " << io::format_double(rec.q_pc)
     << "\npatch  center  q_patch  w_patch\n";
  for (std::size_t i = 0; i < rec.q_patch.size(); ++i) {
    rows.push_back({{"patch", i}, {"center", patches.centers[i]}, {"q_patch", rec.q_patch[i]}, {"w_patch", rec.w_patch[i]}});
    os << std::setw(5) << i << "  " << std::setw(6) << patches.centers[i] << "  " << std::fixed << std::setprecision(4)
       << rec.q_patch[i] << "  " << rec.w_patch[i] << '\n';
  }
  json j = {{"command", "predict"}, {"cloud", rec.name}, {"pooling", train::pooling_name(pooling)},
            {"q_pc", rec.q_pc}, {"patches", rows}};
  emit(o.common, j, os.str());
  return 0;
}

int report_checks(const Common& c, const char* command, const std::vector<check::CheckResult>& results) {
  json rows = json::array();
  std::ostringstream os;
  for (const auto& r : results) {
    rows.push_back({{"name", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"pass", r.pass}, {"detail", r.detail}});
    os << (r.pass ? "ok   " : "FAIL ") << std::left << std::setw(24) << r.name << std::right << " " << std::scientific
       << std::setprecision(3) << r.value << "  (" << r.detail << ")\n";
  }
  const bool ok = check::all_passed(results);
  emit(c, {{"command", command}, {"pass", ok}, {"results", rows}}, os.str());
  return ok ? 0 : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"copp: no-reference point cloud quality assessment"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic distorted dataset");
  add_common(gen, o.common);
  gen->add_option("--out", o.out, "output directory")->required();

  auto* ext = app.add_subcommand("extract-patches", "extract and cache patches for a manifest");
  add_common(ext, o.common);
  ext->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  ext->add_option("--out", o.out, "cache directory")->required();
  ext->add_option("--split", o.extract_split, "train, test or all")->capture_default_str();

  auto* s1 = app.add_subcommand("train-stage1", "train the patch quality regressor");
  add_common(s1, o.common);
  s1->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  s1->add_option("--cache", o.cache, "patch cache directory from extract-patches");
  s1->add_option("--out", o.out, "checkpoint path")->required();

  auto* s2 = app.add_subcommand("train-stage2", "train the correlation network on a frozen stage 1");
  add_common(s2, o.common);
  s2->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  s2->add_option("--stage1", o.stage1)->required()->check(CLI::ExistingFile);
  s2->add_option("--cache", o.cache, "patch cache directory from extract-patches");
  s2->add_option("--out", o.out, "checkpoint path")->required();

  auto* ev = app.add_subcommand("evaluate", "score a manifest split and write the report CSV");
  add_common(ev, o.common);
  ev->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("--stage1", o.stage1)->required()->check(CLI::ExistingFile);
  ev->add_option("--cora", o.cora)->check(CLI::ExistingFile);
  ev->add_option("--cache", o.cache, "patch cache directory from extract-patches");
  ev->add_option("--pooling", o.pooling, "average or cora (default: train.pooling)");
  ev->add_option("--split", o.split, "train, test or all")->capture_default_str();
  ev->add_option("--out", o.out, "report CSV; per-patch rows go to <stem>.patches.csv");

  auto* pr = app.add_subcommand("predict", "predict the quality of one cloud");
  add_common(pr, o.common);
  pr->add_option("--cloud", o.cloud)->required()->check(CLI::ExistingFile);
  pr->add_option("--stage1", o.stage1)->required()->check(CLI::ExistingFile);
  pr->add_option("--cora", o.cora)->check(CLI::ExistingFile);
  pr->add_option("--pooling", o.pooling, "average or cora (default: train.pooling)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of every differentiable op");
  add_common(gc, o.common);

  auto* oc = app.add_subcommand("oracle-check", "sampling and labeling against brute-force oracles");
  add_common(oc, o.common);
  oc->add_option("--instances", o.instances, "random instances per check")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (ext->parsed()) return cmd_extract(o);
    if (s1->parsed()) return cmd_train_stage1(o);
    if (s2->parsed()) return cmd_train_stage2(o);
    if (ev->parsed()) return cmd_evaluate(o);
    if (pr->parsed()) return cmd_predict(o);
    if (gc->parsed()) return report_checks(o.common, "gradcheck", check::gradient_suite(o.common.seed));
    if (oc->parsed()) return report_checks(o.common, "oracle-check", check::oracle_suite(o.common.seed, o.instances));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
