// Acceptance runner: one PASS/FAIL line per criterion.
//
//   copp_acceptance [--work DIR] [--only 1,2,...]
//
// Criteria 5 and 6 drive the copp executable; everything else calls the
// library directly. Exit status is 0 only when every selected criterion passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "copp/check/suites.hpp"
#include "copp/data/synthetic.hpp"
#include "copp/errors.hpp"
#include "copp/io/manifest.hpp"
#include "copp/io/ply.hpp"
#include "copp/io/text.hpp"
#include "copp/model/arkp.hpp"
#include "copp/model/cora.hpp"
#include "copp/rng.hpp"
#include "copp/train/metrics.hpp"
#include "copp/train/pipeline.hpp"

namespace fs = std::filesystem;
using namespace copp;
using ad::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string failed_names(const std::vector<check::CheckResult>& results) {
  std::string s;
  for (const auto& r : results) {
    if (!r.pass) s += (s.empty() ? "" : ",") + r.name + "=" + fmt(r.value);
  }
  return s.empty() ? "none" : s;
}

// ---------------------------------------------------------------- 1 and 2

Outcome oracle_equivalence() {
  Stopwatch sw;
  const auto results = check::oracle_suite(1, 1000);
  const double t = sw.seconds();
  return {check::all_passed(results) && t < 60.0,
          std::to_string(results.size()) + " checks x 1000 instances, failures: " + failed_names(results) + ", " +
              fmt(t, 3) + " s (limit 60)"};
}

Outcome gradient_checks() {
  Stopwatch sw;
  const auto results = check::gradient_suite(1);
  const double t = sw.seconds();
  double op_worst = 0.0, net_worst = 0.0;
  for (const auto& r : results) {
    (r.tolerance == check::kNetTolerance ? net_worst : op_worst) = std::max(
        r.tolerance == check::kNetTolerance ? net_worst : op_worst, r.value);
  }
  return {check::all_passed(results) && t < 120.0,
          std::to_string(results.size()) + " checks, worst op " + fmt(op_worst, 3) + " (< 1e-4), worst net " +
              fmt(net_worst, 3) + " (< 1e-3), " + fmt(t, 3) + " s (limit 120)"};
}

// ---------------------------------------------------------------- 3

long double naive_pool(const std::vector<double>& q, const std::vector<double>& w) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    num += static_cast<long double>(w[i]) * q[i];
    den += w[i];
  }
  return num / den;
}

Outcome pooling_suite() {
  Rng rng(3);
  const std::vector<double> omega = {1.0, 0.5, 0.1}, ones = {1.0, 1.0, 1.0};
  double worst_recompute = 0, worst_scale = 0, worst_uniform = 0;
  std::size_t convexity_bad = 0, pow2_bad = 0;
  constexpr std::size_t kCases = 10000;
  for (std::size_t t = 0; t < kCases; ++t) {
    const std::size_t c = 1 + rng.below(32);
    std::vector<double> q(c), logits(c * 3);
    for (auto& v : q) v = rng.uniform(0, 100);
    if (t % 7 == 0) std::fill(q.begin(), q.end(), q.front());
    for (auto& v : logits) v = rng.normal() * 4.0;
    const Tensor lt = Tensor::from({c, 3}, logits);
    std::vector<double> w = t % 2 ? model::weights_from_logits(lt, omega) : std::vector<double>(c);
    if (t % 2 == 0) {
      for (auto& v : w) v = std::exp(rng.uniform(-10, 3));
    }
    const double pooled = model::correlation_weight_pool(q, w);
    const long double ref = naive_pool(q, w);
    worst_recompute = std::max(worst_recompute, static_cast<double>(std::fabs(pooled - ref) / std::max(1.0L, std::fabs(ref))));
    const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
    convexity_bad += pooled < *lo || pooled > *hi;

    const double lambda = std::exp(rng.uniform(-20, 20));
    std::vector<double> scaled(w), pow2(w);
    for (auto& v : scaled) v *= lambda;
    const double two_k = std::ldexp(1.0, static_cast<int>(rng.below(41)) - 20);
    for (auto& v : pow2) v *= two_k;
    worst_scale = std::max(worst_scale, std::fabs(model::correlation_weight_pool(q, scaled) - pooled) / std::max(1.0, std::fabs(pooled)));
    pow2_bad += model::correlation_weight_pool(q, pow2) != pooled;

    const auto w1 = model::weights_from_logits(lt, ones);
    const std::vector<double> unit(c, 1.0);
    worst_uniform = std::max(worst_uniform, std::fabs(model::correlation_weight_pool(q, w1) -
                                                      model::correlation_weight_pool(q, unit)));
  }
  const bool pass = worst_recompute <= 1e-12 && convexity_bad == 0 && worst_scale <= 1e-12 && pow2_bad == 0 &&
                    worst_uniform <= 1e-12;
  return {pass, std::to_string(kCases) + " cases: recompute err " + fmt(worst_recompute, 3) + ", convexity violations " +
                    std::to_string(convexity_bad) + ", scaling err " + fmt(worst_scale, 3) + " (power-of-two scaling mismatches " +
                    std::to_string(pow2_bad) + "), omega=1 vs average " + fmt(worst_uniform, 3)};
}

// ---------------------------------------------------------------- 4

long double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Average rank by counting: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> oracle_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1.0 + static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1);
  }
  return r;
}

Outcome metric_suite() {
  Rng rng(4);
  double worst = 0;
  std::size_t affine_bad = 0, monotone_bad = 0, rmse_self_bad = 0;
  const std::vector<std::function<double(double)>> monotone = {
      [](double v) { return std::exp(v / 20.0); },
      [](double v) { return v * v * v + 3.0 * v; },
      [](double v) { return std::atan(v / 30.0); },
      [](double v) { return -1.0 / (v + 1000.0); },
  };
  for (std::size_t t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<double> x(n), y(n);
    // Quarter-integer grids keep every shift below exactly representable and
    // make ties common for the rank tests.
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::round(rng.uniform(-100, 100) * 4.0) / 4.0;
      y[i] = t % 3 == 0 ? std::round(0.5 * x[i] + rng.normal() * 8.0) : std::round(rng.uniform(-50, 50) * 4.0) / 4.0;
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) x[0] += 1.0;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) y[0] += 1.0;

    const double p = train::plcc(x, y);
    const double s = train::srcc(x, y);
    const double e = train::rmse(x, y);
    long double sq = 0;
    for (std::size_t i = 0; i < n; ++i) sq += static_cast<long double>(x[i] - y[i]) * (x[i] - y[i]);
    worst = std::max({worst, static_cast<double>(std::fabs(p - oracle_pearson(x, y))),
                      static_cast<double>(std::fabs(s - oracle_pearson(oracle_ranks(x), oracle_ranks(y)))),
                      static_cast<double>(std::fabs(e - std::sqrt(sq / n)))});
    rmse_self_bad += train::rmse(x, x) != 0.0;

    // a > 0 and b chosen so a*x + b is exact: a power of two and a shift on the same grid.
    const double a = std::ldexp(1.0, static_cast<int>(rng.below(21)) - 10);
    const double b = std::round(rng.uniform(-1e4, 1e4)) * a;
    std::vector<double> ax(n);
    for (std::size_t i = 0; i < n; ++i) ax[i] = a * x[i] + b;
    affine_bad += train::plcc(ax, y) != p;
    affine_bad += train::plcc(x, ax) != train::plcc(x, x);

    for (const auto& f : monotone) {
      std::vector<double> fx(n), fy(n);
      std::transform(x.begin(), x.end(), fx.begin(), f);
      std::transform(y.begin(), y.end(), fy.begin(), f);
      monotone_bad += train::srcc(fx, y) != s;
      monotone_bad += train::srcc(x, fy) != s;
    }
  }
  const bool pass = worst <= 1e-9 && affine_bad == 0 && monotone_bad == 0 && rmse_self_bad == 0;
  return {pass, "100 vectors: worst deviation from definitional oracles " + fmt(worst, 3) +
                    " (limit 1e-9), plcc affine mismatches " + std::to_string(affine_bad) +
                    ", srcc monotone mismatches " + std::to_string(monotone_bad)};
}

// ---------------------------------------------------------------- 5 and 6

struct CliRun {
  int status = -1;
  std::string out;
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs inside `dir` so that paths echoed on stdout are relative.
CliRun cli(const fs::path& dir, const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = "cd " + q(dir) + " && " + std::string(COPP_CLI_PATH) + " " + args + " > " +
                          q(stdout_file) + " 2> " + q(stdout_file.string() + ".err");
  const int raw = std::system(cmd.c_str());
  CliRun r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = io::read_file((dir / stdout_file).string());
  return r;
}

/// gen-data, extract-patches, train-stage1, train-stage2 and evaluate (both
/// poolings) into `dir`. Returns the failing step, or an empty string.
std::string run_pipeline(const fs::path& dir, const fs::path& config, std::uint64_t seed,
                         std::map<std::string, nlohmann::json>* results = nullptr) {
  fs::remove_all(dir);
  fs::create_directories(dir / "logs");
  const std::string common = " --config " + q(fs::absolute(config)) + " --seed " + std::to_string(seed) + " --json";
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen-data", "gen-data --out data"},
      {"extract-patches", "extract-patches --manifest data/manifest.csv --out cache"},
      {"train-stage1", "train-stage1 --manifest data/manifest.csv --cache cache --out stage1.ckpt"},
      {"train-stage2", "train-stage2 --manifest data/manifest.csv --cache cache --stage1 stage1.ckpt --out stage2.ckpt"},
      {"evaluate-average",
       "evaluate --manifest data/manifest.csv --cache cache --stage1 stage1.ckpt --pooling average --out report_average.csv"},
      {"evaluate-cora", "evaluate --manifest data/manifest.csv --cache cache --stage1 stage1.ckpt --cora stage2.ckpt "
                        "--pooling cora --out report_cora.csv"},
  };
  for (const auto& [name, args] : steps) {
    const auto r = cli(dir, args + common, fs::path("logs") / (name + ".json"));
    if (r.status != 0) return name + " exited with " + std::to_string(r.status);
    if (results) (*results)[name] = nlohmann::json::parse(r.out);
  }
  return {};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() == ".err") continue;
    out[fs::relative(e.path(), root).string()] = io::read_file(e.path().string());
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  const auto config = work / "determinism.conf";
  io::write_file(config.string(),
                 "sampler.C = 4\nsampler.K = 64\nsampler.R_t = 32\nsampler.R_s = 16\n"
                 "arkp.levels = 2:8:16;4:8:16,16;8:4:16\narkp.pre_conv = 16\narkp.d_branch = 16\narkp.head_hidden = 16\n"
                 "cora.hidden = 16\ncora.blocks = 2\ncora.heads = 2\n"
                 "train.epochs1 = 2\ntrain.epochs2 = 2\ntrain.lr = 1e-2\ntrain.stage2_lr = 1e-2\n"
                 "data.contents = 6\ndata.levels = 2\ndata.points = 512\n");
  Stopwatch sw;
  for (const char* run : {"run_a", "run_b"}) {
    const auto err = run_pipeline(work / "determinism" / run, config, 17);
    if (!err.empty()) return {false, std::string(run) + ": " + err};
  }
  const auto a = tree_contents(work / "determinism/run_a"), b = tree_contents(work / "determinism/run_b");
  std::size_t differing = 0;
  std::string first;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      if (first.empty()) first = name;
    }
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  return {differing == 0 && a.size() > 20,
          std::to_string(a.size()) + " files (dataset, patch cache, checkpoints, reports, stdout) compared twice, " +
              std::to_string(differing) + " differ" + (first.empty() ? "" : " (first: " + first + ")") + ", " +
              fmt(sw.seconds(), 3) + " s"};
}

Outcome benchmark(const fs::path& work) {
  const fs::path config = fs::path(COPP_SOURCE_DIR) / "configs/desk.conf";
  Stopwatch sw;
  std::map<std::string, nlohmann::json> results;
  const auto err = run_pipeline(work / "benchmark", config, 0, &results);
  const double t = sw.seconds();
  if (!err.empty()) return {false, err};
  const auto& ave = results["evaluate-average"];
  const auto& cora = results["evaluate-cora"];
  const double s_ave = ave["srcc"], p_ave = ave["plcc"], s_cora = cora["srcc"], p_cora = cora["plcc"];
  const bool pass = s_ave >= 0.85 && p_ave >= 0.85 && s_cora >= s_ave - 0.02 && t < 1800.0;
  return {pass, "held-out " + std::to_string(ave["clouds"].get<std::size_t>()) + " clouds: average SRCC " + fmt(s_ave) +
                    " PLCC " + fmt(p_ave) + " (>= 0.85); CORA SRCC " + fmt(s_cora) + " PLCC " + fmt(p_cora) +
                    " (SRCC >= " + fmt(s_ave - 0.02) + "); stage-2 train label accuracy " +
                    fmt(results["train-stage2"]["train_accuracy"].get<double>()) + "; total " + fmt(t, 4) +
                    " s (limit 1800)"};
}

// ---------------------------------------------------------------- 7

PointCloud canonical_cloud(Rng& rng, std::size_t index) {
  PointCloud c;
  if (index % 10 == 0) {
    // Generator output, brought to the six-decimal canonical form.
    const auto shape = static_cast<data::Shape>(rng.below(4));
    return io::parse_ply(io::write_ply(data::generate_base_cloud(shape, 64 + rng.below(200), rng.next_u64())));
  }
  const std::size_t n = 1 + rng.below(64);
  const double span = std::pow(10.0, static_cast<double>(rng.below(7)));  // up to 1e6
  auto coord = [&] {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", rng.uniform(-span, span));
    return *io::parse_double(buf);
  };
  for (std::size_t i = 0; i < n; ++i) {
    Point p;
    p.x = coord();
    p.y = coord();
    p.z = coord();
    p.r = static_cast<int>(rng.below(256));
    p.g = static_cast<int>(rng.below(256));
    p.b = static_cast<int>(rng.below(256));
    c.points.push_back(p);
  }
  return c;
}

Outcome format_round_trips() {
  Rng rng(7);
  std::size_t ply_bad = 0;
  constexpr std::size_t kClouds = 10000;
  for (std::size_t i = 0; i < kClouds; ++i) {
    const auto cloud = canonical_cloud(rng, i);
    const auto text = io::write_ply(cloud);
    const auto back = io::parse_ply(text);
    ply_bad += back.points != cloud.points || io::write_ply(back) != text;
  }

  std::size_t manifest_bad = 0, report_bad = 0;
  for (std::size_t t = 0; t < 200; ++t) {
    io::DatasetManifest m;
    const std::size_t rows = rng.below(40);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::string file = "dir" + std::to_string(rng.below(3)) + "/cloud_" + std::to_string(i) + ".ply";
      m.entries.push_back({file, fs::path("base") / file, rng.uniform(0, 100),
                           rng.below(2) ? io::Split::train : io::Split::test});
    }
    manifest_bad += io::parse_manifest(io::write_manifest(m), "base") != m;

    train::EvalReport r;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      train::QualityRecord rec;
      rec.name = "c" + std::to_string(i);
      rec.mos = rng.uniform(0, 100);
      rec.q_pc = rng.uniform(0, 100);
      r.records.push_back(rec);
    }
    r.plcc = rng.uniform(-1, 1);
    r.srcc = rng.uniform(-1, 1);
    r.rmse = rng.uniform(0, 50);
    const auto parsed = train::parse_report_csv(train::write_report_csv(r));
    bool same = parsed.rows.size() == n && parsed.plcc == r.plcc && parsed.srcc == r.srcc && parsed.rmse == r.rmse;
    for (std::size_t i = 0; same && i < n; ++i) {
      const auto& a = parsed.rows[i];
      const auto& b = r.records[i];
      same = a.name == b.name && a.mos == b.mos && a.q_pc == b.q_pc && a.abs_err == std::abs(b.q_pc - b.mos);
    }
    report_bad += !same;
  }
  return {ply_bad == 0 && manifest_bad == 0 && report_bad == 0,
          std::to_string(kClouds) + " PLY clouds (" + std::to_string(ply_bad) + " mismatches), 200 manifests (" +
              std::to_string(manifest_bad) + "), 200 reports (" + std::to_string(report_bad) + ")"};
}

// ---------------------------------------------------------------- 8

Tensor random_tensor(ad::Shape shape, Rng& rng) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Outcome structural_invariants() {
  Rng rng(8);
  std::size_t pointnet_bad = 0, cora_bad = 0, partition_bad = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    // Set abstraction with a fixed grouping plan; members shuffled inside each group.
    const std::size_t batch = 1 + rng.below(3), n = 16 + rng.below(48), n_out = 1 + rng.below(n / 2),
                      k = 1 + rng.below(std::min<std::size_t>(n, 12)), width = 1 + rng.below(6);
    std::vector<geometry::Vec3> pos(batch * n);
    for (auto& p : pos) p = {rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(-500, 500)};
    std::vector<std::uint64_t> seeds(batch);
    for (auto& s : seeds) s = rng.next_u64();
    auto plan = model::plan_grouping(pos, batch, n, n_out, k, seeds, 0);
    std::vector<model::PointwiseBlock> mlp;
    mlp.emplace_back(3 + width, 8, rng);
    mlp.emplace_back(8, 4 + rng.below(8), rng);
    for (auto& block : mlp) {
      for (auto& m : block.norm.state.running_mean) m = rng.normal();
      for (auto& v : block.norm.state.running_var) v = rng.uniform(0.5, 2.0);
    }
    const Tensor feats = random_tensor({batch * n, width}, rng);
    const auto ref = model::set_abstraction(pos, feats, plan, mlp, ad::Mode::eval, 1e-3);
    for (std::size_t g = 0; g < plan.centroids.size(); ++g) {
      auto* begin = plan.neighbors.data() + g * k;
      for (std::size_t i = k; i > 1; --i) std::swap(begin[i - 1], begin[rng.below(i)]);
    }
    const auto shuffled = model::set_abstraction(pos, feats, plan, mlp, ad::Mode::eval, 1e-3);
    pointnet_bad += values(ref.features) != values(shuffled.features);

    // CORA: permuting patches permutes the logit rows.
    const std::size_t heads = 1 + rng.below(4);
    const model::CoraConfig cfg{4 + rng.below(12), heads * (2 + rng.below(6)), 1 + rng.below(3), heads, 1 + rng.below(2)};
    const model::CoraNet net(cfg, rng.next_u64());
    const std::size_t c = 3 + rng.below(30);
    const Tensor x = random_tensor({c, cfg.input_width}, rng);
    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = c; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    cora_bad += values(net.forward(ad::gather_rows(x, perm))) != values(ad::gather_rows(net.forward(x), perm));
  }
  for (std::size_t c = 3; c <= 33; ++c) {
    const std::size_t ns = (c + 2) / 3, na = (c - ns + 1) / 2;
    const std::array<std::size_t, 3> want{ns, na, c - ns - na};
    partition_bad += model::class_partition(c) != want;
  }
  partition_bad += model::class_partition(16) != std::array<std::size_t, 3>{6, 5, 5};
  return {pointnet_bad == 0 && cora_bad == 0 && partition_bad == 0,
          "100 set-abstraction instances (" + std::to_string(pointnet_bad) + " changed by member order), 100 CORA instances (" +
              std::to_string(cora_bad) + " not equivariant), partitions C=3..33 (" + std::to_string(partition_bad) +
              " wrong)"};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome(const fs::path&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::current_path() / "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      for (const auto& tok : io::split_on(argv[++i], ',')) only.insert(static_cast<int>(*io::parse_int(tok)));
    } else {
      std::cerr << "usage: copp_acceptance [--work DIR] [--only 1,2,...]\n";
      return 1;
    }
  }
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "oracle equivalence", [](const fs::path&) { return oracle_equivalence(); }},
      {2, "gradient suite", [](const fs::path&) { return gradient_checks(); }},
      {3, "weighted pooling suite", [](const fs::path&) { return pooling_suite(); }},
      {4, "metric suite", [](const fs::path&) { return metric_suite(); }},
      {5, "determinism", determinism},
      {6, "end-to-end synthetic benchmark", benchmark},
      {7, "format round trip", [](const fs::path&) { return format_round_trips(); }},
      {8, "structural invariants", [](const fs::path&) { return structural_invariants(); }},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
