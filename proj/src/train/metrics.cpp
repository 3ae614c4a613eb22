#include "copp/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "copp/autodiff/ops.hpp"
#include "copp/errors.hpp"

namespace copp::train {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("metric inputs differ in length (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw DomainError("metrics need at least two samples");
}

// n * v_i - sum(v), each rounded once from its exact value. An exact shift
// of v leaves these bitwise unchanged and a power-of-two scale scales them
// exactly, so plcc inherits both invariances.
std::vector<double> scaled_deviations(std::span<const double> v) {
  const auto partials = ad::exact_partials(v);
  const double n = static_cast<double>(v.size());
  std::vector<double> terms(partials.size() + 2), out(v.size());
  for (std::size_t j = 0; j < partials.size(); ++j) terms[j + 2] = -partials[j];
  for (std::size_t i = 0; i < v.size(); ++i) {
    terms[0] = n * v[i];
    terms[1] = std::fma(n, v[i], -terms[0]);
    out[i] = ad::exact_sum(terms);
  }
  return out;
}

}  // namespace

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto devx = scaled_deviations(x), devy = scaled_deviations(y);
  std::vector<double> sxy(x.size()), sxx(x.size()), syy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = devx[i], dy = devy[i];
    sxy[i] = dx * dy;
    sxx[i] = dx * dx;
    syy[i] = dy * dy;
  }
  const double vx = ad::exact_sum(sxx), vy = ad::exact_sum(syy);
  if (vx == 0.0 || vy == 0.0) throw UndefinedCorrelationError("correlation is undefined for a constant input");
  return std::clamp(ad::exact_sum(sxy) / std::sqrt(vx * vy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j + 1);  // mean of 1-based positions i+1..j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  return plcc(average_ranks(x), average_ranks(y));
}

double rmse(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("rmse inputs differ in length");
  if (x.size() < 2) throw DomainError("metrics need at least two samples");
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(ad::exact_sum(sq) / static_cast<double>(x.size()));
}

}  // namespace copp::train
