#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "copp/autodiff/checkpoint.hpp"
#include "copp/autodiff/gradcheck.hpp"
#include "copp/autodiff/ops.hpp"
#include "copp/autodiff/optim.hpp"
#include "copp/errors.hpp"
#include "copp/rng.hpp"

using namespace copp;
using namespace copp::ad;
using Catch::Approx;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul examples") {
  const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const auto a = Tensor::zeros({2, 3});
  const auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul gradient is the column sums of b") {
  Rng rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng, false);
  sum(matmul(a, b)).backward();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(a.grad()[i * 4 + k] == Approx(b.at(k, 0) + b.at(k, 1)));
  }
  const auto r = check_gradients([&] { return sum(matmul(a, b)); }, {a});
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("linear examples and errors") {
  const auto w = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = Tensor::from({3}, {7, 8, 9});
  const auto y = linear(Tensor::zeros({4, 2}), w, b);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(y.at(r, 0) == 7.0);
    CHECK(y.at(r, 2) == 9.0);
  }
  CHECK(linear(Tensor::from({1, 1}, {2}), Tensor::from({1, 1}, {3}), Tensor::from({1}, {1})).item() == 7.0);
  CHECK_THROWS_AS(linear(Tensor::zeros({4, 3}), w, b), DimensionError);
}

TEST_CASE("leaky relu examples") {
  auto x = Tensor::from({3}, {5, -1, 0}, true);
  const auto y = leaky_relu(x, 0.01);
  CHECK(y[0] == 5.0);
  CHECK(y[1] == Approx(-0.01));
  CHECK(y[2] == 0.0);
  sum(y).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[2] == 0.01);
}

TEST_CASE("batch norm degenerate cases") {
  BatchNormState state(2);
  const auto x = Tensor::from({3, 2}, {1, 2, 1, 2, 1, 2});
  const auto y = batch_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), state, Mode::train);
  for (double v : y.data()) CHECK(v == 0.0);

  Rng rng(2);
  BatchNormState s2(3);
  const auto z = batch_norm(random_tensor({5, 3}, rng), Tensor::zeros({3}), Tensor::from({3}, {1, 2, 3}), s2,
                            Mode::train);
  for (std::size_t r = 0; r < 5; ++r) CHECK(z.at(r, 1) == 2.0);
}

TEST_CASE("batch norm running statistics drive eval mode") {
  BatchNormState state(1);
  const auto x = Tensor::from({2, 1}, {1, 3});
  batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), state, Mode::train);
  CHECK(state.running_mean[0] == Approx(0.1 * 2.0));
  const auto y = batch_norm(Tensor::from({1, 1}, {0.2}), Tensor::full({1}, 1.0), Tensor::zeros({1}), state, Mode::eval);
  CHECK(y.item() == Approx(0.0).margin(1e-12));
}

TEST_CASE("softmax examples") {
  CHECK(values(softmax(Tensor::from({2}, {0, 0}), 0)) == std::vector<double>{0.5, 0.5});
  CHECK(softmax(Tensor::from({1}, {3.5}), 0).item() == 1.0);
  const auto s = softmax(Tensor::from({1, 2}, {1000, 0}), 1);
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == Approx(1.0));
  CHECK(s[1] == Approx(0.0).margin(1e-300));
}

TEST_CASE("max reduce examples and tie routing") {
  const auto m = max_reduce(Tensor::from({2, 2}, {1, 5, 3, 2}));
  CHECK(values(m) == std::vector<double>{3, 5});
  CHECK(values(max_reduce(Tensor::from({1, 3}, {4, 5, 6}))) == std::vector<double>{4, 5, 6});
  auto t = Tensor::from({2, 2}, {2, 1, 2, 0}, true);
  sum(max_reduce(t)).backward();
  CHECK(values(Tensor::from({4}, {t.grad().begin(), t.grad().end()})) == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("losses") {
  const auto p = Tensor::from({2}, {0, 0});
  CHECK(mse_loss(p, p).item() == 0.0);
  CHECK(mse_loss(p, Tensor::from({2}, {2, 0})).item() == 2.0);
  const int label0[] = {0};
  CHECK(cross_entropy(Tensor::from({1, 3}, {0, 0, 0}), label0).item() == Approx(std::log(3.0)));
  CHECK(cross_entropy(Tensor::from({1, 3}, {50, 0, 0}), label0).item() == Approx(0.0).margin(1e-20));
  const int bad[] = {3};
  CHECK_THROWS_AS(cross_entropy(Tensor::from({1, 3}, {0, 0, 0}), bad), DomainError);
}

TEST_CASE("backward contracts") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = Tensor::from({2}, {0.5, -0.5}, true);
  const auto c = Tensor::from({2}, {0.5, -0.5});
  mse_loss(y, c).backward();
  for (double g : y.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(Tensor::from({2}, {1, 2}, true).backward(), DomainError);
}

TEST_CASE("backward is deterministic and accumulates into leaves") {
  Rng rng(3);
  auto a = random_tensor({4, 5}, rng);
  auto w = random_tensor({5, 3}, rng);
  auto loss = [&] { return sum(leaky_relu(matmul(a, w))); };
  loss().backward();
  const std::vector<double> g1(w.grad().begin(), w.grad().end());
  w.zero_grad();
  loss().backward();
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == g1);
  loss().backward();
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(w.grad()[i] == 2.0 * g1[i]);
}

TEST_CASE("constant inputs build no graph") {
  const auto a = Tensor::from({2}, {1, 2});
  const auto y = add(a, a);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("node ids increase along the graph") {
  auto a = Tensor::from({2}, {1, 2}, true);
  const auto b = scale(a, 2.0);
  const auto c = add(a, b);
  CHECK(a.id() < b.id());
  CHECK(b.id() < c.id());
}

TEST_CASE("exact_sum is order independent") {
  std::vector<double> v = {1e100, 1.0, -1e100, 1e-20};
  CHECK(exact_sum(v) == 1.0 + 1e-20);
  std::reverse(v.begin(), v.end());
  CHECK(exact_sum(v) == 1.0 + 1e-20);
  CHECK(exact_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("structural ops preserve values") {
  Rng rng(4);
  const auto x = random_tensor({4, 3}, rng, false);
  const std::size_t rows[] = {3, 0, 3};
  const auto g = gather_rows(x, rows);
  CHECK(g.at(0, 2) == x.at(3, 2));
  CHECK(g.at(1, 0) == x.at(0, 0));
  const auto cat = concat_cols({x, x});
  CHECK(cat.cols() == 6);
  CHECK(cat.at(2, 4) == x.at(2, 1));
  CHECK(values(slice_rows(concat_rows({x, x}), 4, 8)) == values(x));
  CHECK(values(slice_cols(cat, 3, 6)) == values(x));
  CHECK(reshape(x, {12}).rank() == 1);
  CHECK_THROWS_AS(reshape(x, {5}), DimensionError);
  CHECK(values(transpose(transpose(x))) == values(x));
}

TEST_CASE("segment max pools consecutive groups") {
  const auto x = Tensor::from({4, 1}, {1, 4, 3, 2});
  CHECK(values(segment_max(x, 2)) == std::vector<double>{4, 3});
  CHECK_THROWS(segment_max(x, 3));
}

TEST_CASE("attention is invariant to key order") {
  Rng rng(5);
  const auto q = random_tensor({3, 4}, rng, false);
  const auto k = random_tensor({5, 4}, rng, false);
  const auto v = random_tensor({5, 2}, rng, false);
  const std::size_t perm[] = {4, 2, 0, 1, 3};
  const auto a = attention(q, k, v, 0.5);
  const auto b = attention(q, gather_rows(k, perm), gather_rows(v, perm), 0.5);
  CHECK(values(a) == values(b));
}

TEST_CASE("gradient checks on representative ops") {
  Rng rng(6);
  auto x = random_tensor({4, 3}, rng);
  auto gamma = random_tensor({3}, rng);
  auto beta = random_tensor({3}, rng);
  BatchNormState state(3);
  auto bn = [&] {
    BatchNormState s = state;
    return sum(scale(leaky_relu(batch_norm(x, gamma, beta, s, Mode::train)), 1.3));
  };
  CHECK(check_gradients(bn, {x, gamma, beta}).max_rel_err < 1e-4);
  auto ln = [&] { return mean(softmax(layer_norm(x, gamma, beta), 1)); };
  CHECK(check_gradients(ln, {x, gamma, beta}).max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.put("a", {2, 2}, {1, 2, 3, 4});
  ck.put("b", 0.1);
  const auto back = Checkpoint::from_bytes(ck.to_bytes());
  CHECK(back == ck);
  CHECK(back.scalar("b") == 0.1);
  CHECK_THROWS(back.get("missing"));
  auto bytes = ck.to_bytes();
  bytes[0] = 'X';
  CHECK_THROWS(Checkpoint::from_bytes(bytes));
  bytes = ck.to_bytes();
  bytes.pop_back();
  CHECK_THROWS(Checkpoint::from_bytes(bytes));
  auto t = Tensor::zeros({3});
  CHECK_THROWS_AS(ck.load_into("a", t), DimensionError);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 1e-4) == 1e-4);
  CHECK(cosine_lr(100, 100, 1e-4) == Approx(0.0).margin(1e-20));
  CHECK(cosine_lr(50, 100, 1e-4) == Approx(0.5e-4));
  CHECK(cosine_lr(150, 100, 1e-4) == 0.0);
}

TEST_CASE("sgd update") {
  auto p = Tensor::from({1}, {1.0}, true);
  Sgd opt({p}, OptimizerState{0.1, 0, 1000000, 0.0});
  opt.zero_grad();
  sum(scale(p, 2.0)).backward();
  opt.step();
  CHECK(p[0] == Approx(0.8));

  auto q = Tensor::from({2}, {1.0, -2.0}, true);
  Sgd still({q}, OptimizerState{0.1, 0, 10, 0.9});
  still.zero_grad();
  sum(scale(q, 0.0)).backward();
  still.step();
  CHECK(q[0] == 1.0);
  CHECK(q[1] == -2.0);
}
