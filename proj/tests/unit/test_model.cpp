#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "copp/errors.hpp"
#include "copp/model/arkp.hpp"
#include "copp/model/cora.hpp"
#include "copp/rng.hpp"

using namespace copp;
using namespace copp::model;
using Catch::Approx;
using geometry::PointRows;
using geometry::Vec3;

namespace {

PointRows random_rows(std::size_t n, Rng& rng) {
  PointRows r{n, {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) r.values.push_back(rng.uniform(-200, 200));
    for (int c = 0; c < 3; ++c) r.values.push_back(rng.uniform(-60, 60));
  }
  return r;
}

Tensor random_tensor(ad::Shape shape, Rng& rng) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

PatchModelConfig tiny_config() {
  PatchModelConfig cfg;
  cfg.arkp.levels = {{2, 4, {8}}, {4, 4, {8, 8}}};
  cfg.arkp.pre_conv_width = 8;
  cfg.arkp.d_branch = 8;
  cfg.head_hidden = 8;
  cfg.texture_points = 16;
  cfg.structure_points = 8;
  return cfg;
}

// Trains batch-norm running statistics away from their initial values.
void warm_up(PatchQualityModel& m, Rng& rng) {
  const auto& cfg = m.config();
  std::vector<PatchInput> in;
  for (int i = 0; i < 4; ++i) in.push_back({random_rows(cfg.texture_points, rng), random_rows(cfg.structure_points, rng)});
  std::vector<const PatchInput*> ptrs;
  for (auto& p : in) ptrs.push_back(&p);
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  m.forward(ptrs, Mode::train, seeds);
}

}  // namespace

TEST_CASE("class partition") {
  CHECK(class_partition(16) == std::array<std::size_t, 3>{6, 5, 5});
  CHECK(class_partition(3) == std::array<std::size_t, 3>{1, 1, 1});
  CHECK(class_partition(4) == std::array<std::size_t, 3>{2, 1, 1});
  CHECK(class_partition(5) == std::array<std::size_t, 3>{2, 2, 1});
  CHECK_THROWS_AS(class_partition(2), DomainError);
}

TEST_CASE("correlation labels from the sort order") {
  const double mos = 50.0;
  const std::vector<double> err = {0.1, 0.9, 0.3, 0.5, 0.2, 0.7};
  std::vector<double> q;
  for (std::size_t i = 0; i < err.size(); ++i) q.push_back(i % 2 ? mos - err[i] : mos + err[i]);
  const auto labels = build_correlation_labels(q, mos);
  using L = CorrelationLabel;
  CHECK(labels == std::vector<L>{L::strong, L::weak, L::average, L::average, L::strong, L::weak});

  const std::vector<double> flat(5, 7.0);
  CHECK(build_correlation_labels(flat, 6.0) ==
        std::vector<L>{L::strong, L::strong, L::average, L::average, L::weak});
  CHECK_THROWS_AS(build_correlation_labels(std::vector<double>{1, 2}, 0.0), DomainError);
}

TEST_CASE("labels permute with the patches") {
  Rng rng(1);
  std::vector<double> q(9);
  for (auto& v : q) v = rng.uniform(0, 10);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::rotate(perm.begin(), perm.begin() + 4, perm.end());
  std::vector<double> pq;
  for (auto i : perm) pq.push_back(q[i]);
  const auto a = build_correlation_labels(q, 5.0), b = build_correlation_labels(pq, 5.0);
  for (std::size_t j = 0; j < perm.size(); ++j) CHECK(b[j] == a[perm[j]]);
}

TEST_CASE("weights from logits") {
  const std::vector<double> omega = {1.0, 0.5, 0.1};
  const auto strong = weights_from_logits(Tensor::from({1, 3}, {60, 0, 0}), omega);
  CHECK(strong[0] == Approx(1.0));
  const auto uniform = weights_from_logits(Tensor::from({2, 3}, {0, 0, 0, 0, 0, 0}), omega);
  CHECK(uniform[0] == Approx(1.6 / 3.0));
  Rng rng(2);
  const auto logits = random_tensor({5, 3}, rng);
  for (double w : weights_from_logits(logits, std::vector<double>{1, 1, 1})) CHECK(w == Approx(1.0).epsilon(1e-15));
  for (double w : weights_from_logits(logits, omega, SoftmaxAxis::patches)) {
    CHECK(w >= 0.0);
    CHECK(w <= 1.6);
  }
  CHECK_THROWS_AS(weights_from_logits(Tensor::from({1, 2}, {0, 0}), omega), DimensionError);
  CHECK(parse_softmax_axis("patch") == SoftmaxAxis::patches);
  CHECK_THROWS_AS(parse_softmax_axis("row"), ConfigError);
}

TEST_CASE("correlation weight pooling") {
  CHECK(correlation_weight_pool(std::vector<double>{10, 50}, std::vector<double>{1, 3}) == 40.0);
  CHECK(correlation_weight_pool(std::vector<double>{1, 2, 6}, std::vector<double>{0.2, 0.2, 0.2}) == Approx(3.0));
  CHECK(correlation_weight_pool(std::vector<double>{1, 3}, std::vector<double>{0, 0}) == 2.0);
  CHECK_THROWS_AS(correlation_weight_pool(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
  CHECK_THROWS_AS(correlation_weight_pool(std::vector<double>{}, std::vector<double>{}), DomainError);
}

TEST_CASE("arkp level schedule") {
  ArkpConfig cfg;
  CHECK(cfg.level_sizes(128) == std::vector<std::size_t>{64, 32, 16});
  CHECK_THROWS_AS(cfg.level_sizes(16), ConfigError);
  CHECK(ArkpConfig::parse_levels(cfg.levels_string()) == cfg.levels);
  CHECK_THROWS_AS(ArkpConfig::parse_levels("2:16"), ConfigError);
  CHECK_THROWS_AS(ArkpConfig::parse_levels("2:x:8"), ConfigError);
  ArkpConfig flat;
  flat.levels = {{2, 4, {8}}, {2, 4, {8}}};
  CHECK_THROWS_AS(flat.level_sizes(32), ConfigError);
}

TEST_CASE("pointwise block is row equivariant and zero maps to the bias") {
  Rng rng(3);
  PointwiseBlock block(6, 5, rng);
  const auto x = random_tensor({8, 6}, rng);
  const std::size_t perm[] = {7, 3, 0, 1, 6, 2, 5, 4};
  const auto a = block(x, Mode::eval);
  const auto b = block(ad::gather_rows(x, perm), Mode::eval);
  CHECK(values(ad::gather_rows(a, perm)) == values(b));

  Linear lin(6, 4, rng);
  for (auto& v : lin.bias.mutable_data()) v = 0.0;
  const auto z = lin(Tensor::zeros({3, 6}));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("degenerate grouping pairs each point with itself") {
  Rng rng(4);
  const auto rows = random_rows(6, rng);
  const auto pos = rows.positions();
  const std::vector<std::uint64_t> seeds = {9};
  const auto plan = plan_grouping(pos, 1, 6, 6, 1, seeds, 0);
  for (std::size_t g = 0; g < 6; ++g) CHECK(plan.neighbors[g] == plan.centroids[g]);
  std::vector<PointwiseBlock> mlp;
  mlp.emplace_back(3 + 2, 4, rng);
  const auto out = set_abstraction(pos, random_tensor({6, 2}, rng), plan, mlp, Mode::eval);
  CHECK(out.features.rows() == 6);
  CHECK(out.features.cols() == 4);
}

TEST_CASE("set abstraction ignores member order within groups") {
  Rng rng(5);
  const auto rows = random_rows(32, rng);
  const auto pos = rows.positions();
  const std::vector<std::uint64_t> seeds = {3};
  auto plan = plan_grouping(pos, 1, 32, 8, 6, seeds, 1);
  std::vector<PointwiseBlock> mlp;
  mlp.emplace_back(3 + 4, 8, rng);
  mlp.emplace_back(8, 5, rng);
  const auto feats = random_tensor({32, 4}, rng);
  const auto a = set_abstraction(pos, feats, plan, mlp, Mode::eval, 1e-3);
  for (std::size_t g = 0; g < 8; ++g) std::reverse(plan.neighbors.begin() + g * 6, plan.neighbors.begin() + g * 6 + 6);
  const auto b = set_abstraction(pos, feats, plan, mlp, Mode::eval, 1e-3);
  CHECK(values(a.features) == values(b.features));
}

TEST_CASE("fusion") {
  const auto t = Tensor::from({1, 3}, {1, 5, -2});
  const auto s = Tensor::from({1, 3}, {2, 4, -3});
  CHECK(values(fuse_features(t, s)) == std::vector<double>{2, 5, -2});
  CHECK(values(fuse_features(t, t)) == values(t));
  CHECK(fuse_features(t, Tensor::from({1, 2}, {0, 0})).cols() == 5);
}

TEST_CASE("zero head weights output the bias") {
  Rng rng(6);
  QualityHead head(8, 4, rng);
  for (auto& v : head.out.weight.mutable_data()) v = 0.0;
  head.out.bias.mutable_data()[0] = 37.5;
  const auto q = head(random_tensor({3, 8}, rng), Mode::train);
  CHECK(q.cols() == 1);
  for (double v : q.data()) CHECK(v == 37.5);
}

TEST_CASE("patch model shape, determinism and checkpoint round trip") {
  Rng rng(7);
  const auto cfg = tiny_config();
  PatchQualityModel m(cfg, 11);
  warm_up(m, rng);
  PatchInput in{random_rows(16, rng), random_rows(8, rng)};
  const PatchInput* batch[] = {&in};
  const std::vector<std::uint64_t> seeds = {5};
  const auto a = m.forward(batch, Mode::eval, seeds);
  CHECK(a.features.cols() == 8);
  CHECK(a.quality.size() == 1);
  CHECK(values(m.forward(batch, Mode::eval, seeds).quality) == values(a.quality));

  ad::Checkpoint ck;
  m.save(ck);
  auto loaded = PatchQualityModel::load(ad::Checkpoint::from_bytes(ck.to_bytes()));
  CHECK(values(loaded.forward(batch, Mode::eval, seeds).quality) == values(a.quality));
  ad::Checkpoint again;
  loaded.save(again);
  CHECK(again == ck);

  auto wrong = cfg;
  wrong.texture_points = 4;
  CHECK_THROWS_AS(PatchQualityModel(wrong, 0), ConfigError);
}

TEST_CASE("patch model output is unchanged by translating the input before centering") {
  Rng rng(8);
  PatchQualityModel m(tiny_config(), 3);
  warm_up(m, rng);
  auto tex = random_rows(16, rng), str = random_rows(8, rng);
  PatchInput a{geometry::center_patch(tex), geometry::center_patch(str)};
  for (std::size_t i = 0; i < 16; ++i) tex.values[i * 6] += 250.0;
  for (std::size_t i = 0; i < 8; ++i) str.values[i * 6 + 1] -= 75.0;
  PatchInput b{geometry::center_patch(tex), geometry::center_patch(str)};
  const PatchInput* ba[] = {&a};
  const PatchInput* bb[] = {&b};
  const std::vector<std::uint64_t> seeds = {1};
  const double qa = m.forward(ba, Mode::eval, seeds).quality.item();
  const double qb = m.forward(bb, Mode::eval, seeds).quality.item();
  CHECK(qa == Approx(qb).epsilon(1e-9));
}

TEST_CASE("cora shapes, equivariance and errors") {
  Rng rng(9);
  CoraConfig cfg{8, 16, 2, 4, 2};
  CoraNet net(cfg, 1);
  const auto x = random_tensor({5, 8}, rng);
  const auto y = net.forward(x);
  CHECK(y.rows() == 5);
  CHECK(y.cols() == 3);
  const std::size_t perm[] = {2, 4, 0, 3, 1};
  CHECK(values(net.forward(ad::gather_rows(x, perm))) == values(ad::gather_rows(y, perm)));
  CHECK_THROWS_AS(net.forward(random_tensor({5, 7}, rng)), ConfigError);
  CHECK_THROWS_AS(CoraNet(CoraConfig{8, 10, 1, 4, 2}, 0), ConfigError);
}

TEST_CASE("batched cora equals per-cloud runs") {
  Rng rng(10);
  CoraNet net(CoraConfig{8, 16, 2, 2, 2}, 4);
  const auto a = random_tensor({4, 8}, rng), b = random_tensor({4, 8}, rng);
  const auto both = net.forward(ad::concat_rows({a, b}), 4);
  CHECK(values(ad::slice_rows(both, 0, 4)) == values(net.forward(a)));
  CHECK(values(ad::slice_rows(both, 4, 8)) == values(net.forward(b)));
  CHECK_THROWS_AS(net.forward(a, 3), DimensionError);
}

TEST_CASE("cora checkpoint round trip") {
  Rng rng(11);
  CoraNet net(CoraConfig{8, 16, 1, 2, 2}, 5);
  ad::Checkpoint ck;
  net.save(ck);
  const auto loaded = CoraNet::load(ck);
  const auto x = random_tensor({3, 8}, rng);
  CHECK(values(loaded.forward(x)) == values(net.forward(x)));
}
