#include "copp/check/suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "copp/autodiff/gradcheck.hpp"
#include "copp/autodiff/ops.hpp"
#include "copp/geometry/sampling.hpp"
#include "copp/model/arkp.hpp"
#include "copp/model/cora.hpp"
#include "copp/rng.hpp"

namespace copp::check {

using ad::Mode;
using ad::Tensor;
using geometry::Vec3;

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

namespace {

Tensor random_tensor(Rng& rng, ad::Shape shape, bool grad = true) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

CheckResult grad_result(const std::string& name, const ad::GradCheckResult& r, double tol) {
  std::ostringstream os;
  os << r.checked << " checked, " << r.skipped << " kink-adjacent skipped";
  return {name, r.max_rel_err, tol, r.checked > 0 && r.max_rel_err < tol, os.str()};
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed) {
  Rng rng(stream_key({seed, 'G'}));
  std::vector<CheckResult> out;
  auto op = [&](const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> params) {
    out.push_back(grad_result(name, ad::check_gradients(loss, std::move(params)), kOpTolerance));
  };
  // A fixed random projection turns any tensor into a scalar with a
  // non-degenerate gradient.
  auto project = [&](const Tensor& y) {
    const Tensor w = random_tensor(rng, y.shape(), false);
    return [w](const Tensor& t) { return ad::sum(ad::reshape(ad::matmul(ad::reshape(t, {1, t.size()}), ad::reshape(w, {w.size(), 1})), {1})); };
  };

  {
    auto a = random_tensor(rng, {4, 3}), b = random_tensor(rng, {3, 5});
    auto p = project(ad::matmul(a, b));
    op("matmul", [=] { return p(ad::matmul(a, b)); }, {a, b});
  }
  {
    auto a = random_tensor(rng, {4, 3});
    auto p = project(ad::transpose(a));
    op("transpose", [=] { return p(ad::transpose(a)); }, {a});
  }
  {
    auto x = random_tensor(rng, {5, 4}), w = random_tensor(rng, {4, 3}), b = random_tensor(rng, {3});
    auto p = project(ad::linear(x, w, b));
    op("linear", [=] { return p(ad::linear(x, w, b)); }, {x, w, b});
  }
  {
    auto a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
    auto p = project(a);
    op("add", [=] { return p(ad::add(a, b)); }, {a, b});
    op("scale", [=] { return p(ad::scale(a, -1.7)); }, {a});
    op("maximum", [=] { return p(ad::maximum(a, b)); }, {a, b});
    op("leaky_relu", [=] { return p(ad::leaky_relu(a)); }, {a});
  }
  {
    auto x = random_tensor(rng, {6, 3}), g = random_tensor(rng, {3}), b = random_tensor(rng, {3});
    auto p = project(x);
    op("batch_norm", [=] {
      ad::BatchNormState st(3);
      return p(ad::batch_norm(x, g, b, st, Mode::train));
    }, {x, g, b});
    ad::BatchNormState frozen(3);
    for (auto& v : frozen.running_mean) v = rng.normal();
    for (auto& v : frozen.running_var) v = 0.5 + rng.uniform();
    op("batch_norm_eval", [=]() mutable { return p(ad::batch_norm(x, g, b, frozen, Mode::eval)); }, {x, g, b});
  }
  {
    auto x = random_tensor(rng, {4, 5}), g = random_tensor(rng, {5}), b = random_tensor(rng, {5});
    auto p = project(x);
    op("layer_norm", [=] { return p(ad::layer_norm(x, g, b)); }, {x, g, b});
  }
  {
    auto x = random_tensor(rng, {4, 3});
    auto p = project(x);
    op("softmax_rows", [=] { return p(ad::softmax(x, 1)); }, {x});
    op("softmax_cols", [=] { return p(ad::softmax(x, 0)); }, {x});
  }
  {
    auto q = random_tensor(rng, {4, 3}), k = random_tensor(rng, {5, 3}), v = random_tensor(rng, {5, 2});
    auto p = project(ad::attention(q, k, v, 0.6));
    op("attention", [=] { return p(ad::attention(q, k, v, 0.6)); }, {q, k, v});
  }
  {
    auto x = random_tensor(rng, {6, 3});
    auto p2 = project(ad::segment_max(x, 2));
    op("segment_max", [=] { return p2(ad::segment_max(x, 2)); }, {x});
    auto p1 = project(ad::max_reduce(x));
    op("max_reduce", [=] { return p1(ad::max_reduce(x)); }, {x});
    op("sum", [=] { return ad::scale(ad::sum(ad::leaky_relu(x)), 0.3); }, {x});
    op("mean", [=] { return ad::mean(ad::maximum(x, ad::scale(x, 0.5))); }, {x});
  }
  {
    auto x = random_tensor(rng, {5, 3}), y = random_tensor(rng, {5, 2}), z = random_tensor(rng, {2, 3});
    const std::vector<std::size_t> rows = {4, 0, 0, 2, 1, 4};
    auto pg = project(ad::gather_rows(x, rows));
    op("gather_rows", [=] { return pg(ad::gather_rows(x, rows)); }, {x});
    auto pc = project(ad::concat_cols({x, y}));
    op("concat_cols", [=] { return pc(ad::concat_cols({x, y})); }, {x, y});
    auto pr = project(ad::concat_rows({x, z}));
    op("concat_rows", [=] { return pr(ad::concat_rows({x, z})); }, {x, z});
    auto ps = project(ad::slice_cols(x, 1, 3));
    op("slice_cols", [=] { return ps(ad::slice_cols(x, 1, 3)); }, {x});
    auto pt = project(ad::slice_rows(x, 1, 4));
    op("slice_rows", [=] { return pt(ad::slice_rows(x, 1, 4)); }, {x});
    auto pm = project(ad::reshape(x, {3, 5}));
    op("reshape", [=] { return pm(ad::reshape(x, {3, 5})); }, {x});
  }
  {
    auto x = random_tensor(rng, {4, 2}), t = random_tensor(rng, {4, 2}, false);
    op("mse_loss", [=] { return ad::mse_loss(x, t); }, {x});
    auto logits = random_tensor(rng, {4, 3});
    const std::vector<int> labels = {0, 2, 1, 2};
    op("cross_entropy", [=] { return ad::cross_entropy(logits, labels); }, {logits});
  }

  // Tiny composed networks.
  {
    model::PatchModelConfig cfg;
    cfg.arkp.levels = {{2, 4, {8, 8}}, {4, 4, {8}}, {8, 2, {8}}};
    cfg.arkp.pre_conv_width = 8;
    cfg.arkp.d_branch = 8;
    cfg.head_hidden = 8;
    cfg.texture_points = 16;
    cfg.structure_points = 16;
    model::PatchQualityModel net(cfg, stream_key({seed, 'A'}));
    std::vector<model::PatchInput> inputs(3);
    for (auto& in : inputs) {
      for (auto* rows : {&in.texture, &in.structure}) {
        rows->count = 16;
        for (std::size_t i = 0; i < 16 * geometry::PointRows::kWidth; ++i) {
          rows->values.push_back(i % 6 < 3 ? 300.0 * rng.normal() : 60.0 * rng.normal());
        }
      }
    }
    std::vector<const model::PatchInput*> batch = {&inputs[0], &inputs[1], &inputs[2]};
    const std::vector<std::uint64_t> seeds = {11, 12, 13};
    const Tensor target = Tensor::from({3, 1}, {0.3, -0.4, 1.1});
    auto params = net.parameters().tensors();
    out.push_back(grad_result("arkp_patch_model", ad::check_gradients([&] {
      return ad::mse_loss(net.forward(batch, Mode::train, seeds).quality, target);
    }, params), kNetTolerance));
  }
  {
    model::CoraConfig cfg{8, 8, 2, 2, 2};
    model::CoraNet net(cfg, stream_key({seed, 'B'}));
    const Tensor features = random_tensor(rng, {3, 8}, false);
    const std::vector<int> labels = {0, 1, 2};
    out.push_back(grad_result("cora_network", ad::check_gradients([&] {
      return ad::cross_entropy(net.forward(features), labels);
    }, net.parameters().tensors()), kNetTolerance));
  }
  return out;
}

namespace {

// Brute-force references, deliberately written without the production helpers.

double dist2(const Vec3& a, const Vec3& b) {
  return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z);
}

std::vector<std::size_t> oracle_fps(const std::vector<Vec3>& pts, std::size_t count, std::size_t start) {
  std::vector<std::size_t> sel = {start};
  while (sel.size() < count) {
    std::size_t best = pts.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto s : sel) d = std::min(d, dist2(pts[i], pts[s]));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    sel.push_back(best);
  }
  return sel;
}

std::vector<std::size_t> oracle_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back(dist2(pts[i], q), i);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

std::vector<Vec3> random_points(Rng& rng, std::size_t n, bool lattice) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) {
    if (lattice) {
      // Small integer lattice: many exact distance ties.
      p = {static_cast<double>(rng.below(5)), static_cast<double>(rng.below(5)), static_cast<double>(rng.below(3))};
    } else {
      p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    }
  }
  return pts;
}

CheckResult count_result(const std::string& name, std::size_t mismatches, std::size_t instances) {
  std::ostringstream os;
  os << mismatches << " mismatches in " << instances << " instances";
  return {name, static_cast<double>(mismatches), 0.0, mismatches == 0, os.str()};
}

}  // namespace

std::vector<CheckResult> oracle_suite(std::uint64_t seed, std::size_t instances) {
  Rng rng(stream_key({seed, 'O'}));
  std::vector<CheckResult> out;

  std::size_t fps_bad = 0, knn_bad = 0, grid_bad = 0, tex_bad = 0, str_bad = 0, label_bad = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const bool lattice = t % 4 == 3;
    const std::size_t n = 2 + rng.below(255);  // 2..256
    const auto pts = random_points(rng, n, lattice);

    const std::size_t count = 1 + rng.below(std::min<std::size_t>(n, 32));
    const std::uint64_t fps_seed = rng.next_u64();
    const std::size_t start = Rng(fps_seed).below(n);
    if (geometry::farthest_point_sample(pts, count, fps_seed) != oracle_fps(pts, count, start)) ++fps_bad;

    const Vec3 q = lattice ? pts[rng.below(n)] : Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const std::size_t k = 1 + rng.below(n);
    const auto expect = oracle_knn(pts, q, k);
    if (geometry::knn(pts, q, k) != expect) ++knn_bad;
    if (geometry::KnnIndex(pts, 1 + rng.below(8)).query(q, k) != expect) ++grid_bad;

    // Patch inputs: texture = R_t nearest to the patch origin, structure = a
    // seeded subset of distinct patch rows.
    geometry::Patch patch;
    patch.points.count = n;
    for (const auto& p : pts) {
      patch.points.values.insert(patch.points.values.end(), {p.x, p.y, p.z, rng.uniform(-50, 50),
                                                              rng.uniform(-50, 50), rng.uniform(-50, 50)});
    }
    const std::size_t rt = 1 + rng.below(n), rs = 1 + rng.below(n);
    const auto tex = geometry::sample_texture_input(patch, rt);
    const auto tex_expect = oracle_knn(pts, Vec3{}, rt);
    bool tex_ok = tex.count == rt;
    for (std::size_t i = 0; tex_ok && i < rt; ++i) {
      const auto r = tex.row(i), e = patch.points.row(tex_expect[i]);
      tex_ok = std::equal(r.begin(), r.end(), e.begin());
    }
    tex_bad += !tex_ok;

    const auto str = geometry::sample_structure_input(patch, rs, rng.next_u64());
    std::set<std::size_t> used;
    bool str_ok = str.count == rs;
    for (std::size_t i = 0; str_ok && i < rs; ++i) {
      const auto r = str.row(i);
      bool found = false;
      for (std::size_t j = 0; j < n && !found; ++j) {
        const auto e = patch.points.row(j);
        if (!used.contains(j) && std::equal(r.begin(), r.end(), e.begin())) {
          used.insert(j);
          found = true;
        }
      }
      str_ok = found;
    }
    str_bad += !str_ok;

    // Correlation labels: sort |err| ascending with ties by index, then cut.
    const std::size_t c = 3 + rng.below(30);  // 3..32
    std::vector<double> qp(c);
    const double mos = rng.uniform(0, 100);
    for (auto& v : qp) v = lattice ? mos + static_cast<double>(rng.below(5)) - 2.0 : rng.uniform(0, 100);
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 1; i < c; ++i) {  // insertion sort: stable by construction
      for (std::size_t j = i; j > 0; --j) {
        const double a = std::abs(qp[order[j - 1]] - mos), b = std::abs(qp[order[j]] - mos);
        if (b < a) std::swap(order[j - 1], order[j]);
        else break;
      }
    }
    const std::size_t ns = (c + 2) / 3, na = (c - ns + 1) / 2;
    const auto labels = model::build_correlation_labels(qp, mos);
    bool lab_ok = true;
    for (std::size_t r = 0; r < c; ++r) {
      const int want = r < ns ? 0 : (r < ns + na ? 1 : 2);
      lab_ok = lab_ok && static_cast<int>(labels[order[r]]) == want;
    }
    label_bad += !lab_ok;
  }
  out.push_back(count_result("fps", fps_bad, instances));
  out.push_back(count_result("knn_exhaustive", knn_bad, instances));
  out.push_back(count_result("knn_grid_index", grid_bad, instances));
  out.push_back(count_result("texture_membership", tex_bad, instances));
  out.push_back(count_result("structure_membership", str_bad, instances));
  out.push_back(count_result("correlation_labels", label_bad, instances));
  return out;
}

}  // namespace copp::check
