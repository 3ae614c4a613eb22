#include "copp/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "copp/errors.hpp"

namespace copp::ad {

namespace {

constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 256;

// C[m x n] += A[m x k] * B[k x n]. Every C element accumulates its k products
// in ascending k order regardless of blocking, and each output row depends only
// on its own row of A, so a row's result does not depend on its batch position.
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
    const std::size_t p1 = std::min(k, p0 + kBlockK);
    for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
      const std::size_t j1 = std::min(n, j0 + kBlockN);
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        std::size_t p = p0;
        for (; p + 4 <= p1; p += 4) {
          const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
          const double *b0 = b + p * n, *b1 = b0 + n, *b2 = b1 + n, *b3 = b2 + n;
          for (std::size_t j = j0; j < j1; ++j) {
            double t = crow[j];
            t += a0 * b0[j];
            t += a1 * b1[j];
            t += a2 * b2[j];
            t += a3 * b3[j];
            crow[j] = t;
          }
        }
        for (; p < p1; ++p) {
          const double av = arow[p];
          const double* brow = b + p * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

// C[k x n] += A^T * G for A[m x k], G[m x n]; each C element sums over rows of
// A in ascending order.
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* g, double* c) {
  for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
    const std::size_t p1 = std::min(k, p0 + kBlockK);
    for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
      const std::size_t j1 = std::min(n, j0 + kBlockN);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        const double *g0 = g + i * n, *g1 = g0 + n, *g2 = g1 + n, *g3 = g2 + n;
        const double *r0 = a + i * k, *r1 = r0 + k, *r2 = r1 + k, *r3 = r2 + k;
        for (std::size_t p = p0; p < p1; ++p) {
          const double a0 = r0[p], a1 = r1[p], a2 = r2[p], a3 = r3[p];
          double* crow = c + p * n;
          for (std::size_t j = j0; j < j1; ++j) {
            double t = crow[j];
            t += a0 * g0[j];
            t += a1 * g1[j];
            t += a2 * g2[j];
            t += a3 * g3[j];
            crow[j] = t;
          }
        }
      }
      for (; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t p = p0; p < p1; ++p) {
          const double av = arow[p];
          double* crow = c + p * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += av * grow[j];
        }
      }
    }
  }
}

std::vector<double> transposed(std::span<const double> x, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kTile = 32;
  std::vector<double> t(x.size());
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) t[c * rows + r] = x[r * cols + c];
    }
  }
  return t;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

const std::vector<double>& in_data(const Node& self, std::size_t i) { return self.inputs[i]->data; }
bool in_grad(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

}  // namespace

std::vector<double> exact_partials(std::span<const double> values) {
  // Shewchuk's non-overlapping partials.
  std::vector<double> partials;
  partials.reserve(8);
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  return partials;
}

double exact_sum(std::span<const double> values) {
  // Rounds the partials with a final half-even correction.
  const auto partials = exact_partials(values);
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [m, k, n](const Node& self, std::span<const double> g, GradStore& store) {
                       const auto& av = in_data(self, 0);
                       const auto& bv = in_data(self, 1);
                       if (in_grad(self, 0)) {
                         const auto bt = transposed(bv, k, n);
                         gemm_acc(m, n, k, g.data(), bt.data(), store.buffer(*self.inputs[0]).data());
                       }
                       if (in_grad(self, 1)) {
                         gemm_tn_acc(m, k, n, av.data(), g.data(), store.buffer(*self.inputs[1]).data());
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const auto r = a.dim(0), c = a.dim(1);
  return make_result("transpose", {c, r}, transposed(a.data(), r, c), {a},
                     [r, c](const Node& self, std::span<const double> g, GradStore& store) {
                       store.accumulate(*self.inputs[0], transposed(g, c, r));
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_matrix(x, "linear");
  require_matrix(weight, "linear");
  const auto m = x.dim(0), k = x.dim(1), n = weight.dim(1);
  if (weight.dim(0) != k || bias.size() != n) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " + shape_string(weight.shape()) +
                         ", bias " + shape_string(bias.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(m, k, n, x.data().data(), weight.data().data(), out.data());
  const auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result("linear", {m, n}, std::move(out), {x, weight, bias},
                     [m, k, n](const Node& self, std::span<const double> g, GradStore& store) {
                       if (in_grad(self, 0)) {
                         const auto wt = transposed(in_data(self, 1), k, n);
                         gemm_acc(m, n, k, g.data(), wt.data(), store.buffer(*self.inputs[0]).data());
                       }
                       if (in_grad(self, 1)) {
                         gemm_tn_acc(m, k, n, in_data(self, 0).data(), g.data(),
                                     store.buffer(*self.inputs[1]).data());
                       }
                       if (in_grad(self, 2)) {
                         auto& gb = store.buffer(*self.inputs[2]);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b},
                     [](const Node& self, std::span<const double> g, GradStore& store) {
                       for (std::size_t i = 0; i < 2; ++i)
                         if (in_grad(self, i)) store.accumulate(*self.inputs[i], g);
                     });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result("scale", x.shape(), std::move(out), {x},
                     [factor](const Node& self, std::span<const double> g, GradStore& store) {
                       auto& gx = store.buffer(*self.inputs[0]);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                     });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "maximum");
  std::vector<double> out(a.size());
  std::vector<bool> from_a(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    from_a[i] = a[i] >= b[i];
    out[i] = from_a[i] ? a[i] : b[i];
  }
  return make_result("maximum", a.shape(), std::move(out), {a, b},
                     [from_a = std::move(from_a)](const Node& self, std::span<const double> g, GradStore& store) {
                       if (in_grad(self, 0)) {
                         auto& ga = store.buffer(*self.inputs[0]);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           if (from_a[i]) ga[i] += g[i];
                       }
                       if (in_grad(self, 1)) {
                         auto& gb = store.buffer(*self.inputs[1]);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           if (!from_a[i]) gb[i] += g[i];
                       }
                     });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  if (negative_slope < 0.0) throw DomainError("leaky_relu: negative slope must be >= 0");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : negative_slope * x[i];
  return make_result("leaky_relu", x.shape(), std::move(out), {x},
                     [negative_slope](const Node& self, std::span<const double> g, GradStore& store) {
                       const auto& xv = in_data(self, 0);
                       auto& gx = store.buffer(*self.inputs[0]);
                       // Subgradient at 0 is the slope.
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : negative_slope * g[i];
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                  double eps) {
  require_matrix(x, "batch_norm");
  const auto b = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d || state.running_mean.size() != d || state.running_var.size() != d) {
    throw DimensionError("batch_norm: input " + shape_string(x.shape()) + " vs gamma " +
                         shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
  }
  const auto xv = x.data();
  std::vector<double> mu(d, 0.0), var(d, 0.0);
  if (mode == Mode::train) {
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += xv[i * d + j];
    for (auto& m : mu) m /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = xv[i * d + j] - mu[j];
        var[j] += c * c;
      }
    for (auto& v : var) v /= static_cast<double>(b);
    const double unbias = b > 1 ? static_cast<double>(b) / static_cast<double>(b - 1) : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      state.running_mean[j] = state.momentum * state.running_mean[j] + (1.0 - state.momentum) * mu[j];
      state.running_var[j] = state.momentum * state.running_var[j] + (1.0 - state.momentum) * var[j] * unbias;
    }
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }
  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

  std::vector<double> xhat(b * d), out(b * d);
  const auto gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const auto idx = i * d + j;
      xhat[idx] = (xv[idx] - mu[j]) * inv_std[j];
      out[idx] = gv[j] * xhat[idx] + bv[j];
    }

  const bool training = mode == Mode::train;
  return make_result(
      "batch_norm", {b, d}, std::move(out), {x, gamma, beta},
      [b, d, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Node& self, std::span<const double> g, GradStore& store) {
        const auto& gam = in_data(self, 1);
        if (in_grad(self, 1) || in_grad(self, 2)) {
          std::vector<double> dgamma(d, 0.0), dbeta(d, 0.0);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              dgamma[j] += g[i * d + j] * xhat[i * d + j];
              dbeta[j] += g[i * d + j];
            }
          if (in_grad(self, 1)) store.accumulate(*self.inputs[1], dgamma);
          if (in_grad(self, 2)) store.accumulate(*self.inputs[2], dbeta);
        }
        if (!in_grad(self, 0)) return;
        auto& gx = store.buffer(*self.inputs[0]);
        if (!training) {
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * gam[j] * inv_std[j];
          return;
        }
        std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            sum_g[j] += g[i * d + j];
            sum_gx[j] += g[i * d + j] * xhat[i * d + j];
          }
        const double inv_b = 1.0 / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const auto idx = i * d + j;
            gx[idx] += gam[j] * inv_std[j] * (g[idx] - inv_b * sum_g[j] - xhat[idx] * inv_b * sum_gx[j]);
          }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const auto n = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + " vs gamma " +
                         shape_string(gamma.shape()));
  }
  const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv[i * d + j] - mu) * (xv[i * d + j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return make_result("layer_norm", {n, d}, std::move(out), {x, gamma, beta},
                     [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                         const Node& self, std::span<const double> g, GradStore& store) {
                       const auto& gam = in_data(self, 1);
                       if (in_grad(self, 1) || in_grad(self, 2)) {
                         std::vector<double> dgamma(d, 0.0), dbeta(d, 0.0);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j) {
                             dgamma[j] += g[i * d + j] * xhat[i * d + j];
                             dbeta[j] += g[i * d + j];
                           }
                         if (in_grad(self, 1)) store.accumulate(*self.inputs[1], dgamma);
                         if (in_grad(self, 2)) store.accumulate(*self.inputs[2], dbeta);
                       }
                       if (!in_grad(self, 0)) return;
                       auto& gx = store.buffer(*self.inputs[0]);
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t i = 0; i < n; ++i) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dxh = g[i * d + j] * gam[j];
                           s1 += dxh;
                           s2 += dxh * xhat[i * d + j];
                         }
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dxh = g[i * d + j] * gam[j];
                           gx[i * d + j] += inv_std[i] * (dxh - inv_d * s1 - xhat[i * d + j] * inv_d * s2);
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() > 2 || axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  }
  // View as [outer x len] with stride `step` between consecutive axis entries.
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  const bool along_cols = x.rank() == 1 || axis == 1;
  const std::size_t outer = along_cols ? rows : cols;
  const std::size_t len = along_cols ? cols : rows;
  auto index = [=](std::size_t o, std::size_t t) { return along_cols ? o * cols + t : t * cols + o; };

  const auto xv = x.data();
  std::vector<double> out(x.size());
  std::vector<double> e(len);
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, xv[index(o, t)]);
    for (std::size_t t = 0; t < len; ++t) e[t] = std::exp(xv[index(o, t)] - mx);
    const double z = exact_sum(e);
    for (std::size_t t = 0; t < len; ++t) out[index(o, t)] = e[t] / z;
  }
  auto y = out;
  return make_result("softmax", x.shape(), std::move(out), {x},
                     [outer, len, index, y = std::move(y)](const Node& self, std::span<const double> g,
                                                           GradStore& store) {
                       auto& gx = store.buffer(*self.inputs[0]);
                       for (std::size_t o = 0; o < outer; ++o) {
                         double dot = 0.0;
                         for (std::size_t t = 0; t < len; ++t) dot += g[index(o, t)] * y[index(o, t)];
                         for (std::size_t t = 0; t < len; ++t) {
                           const auto idx = index(o, t);
                           gx[idx] += y[idx] * (g[idx] - dot);
                         }
                       }
                     });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double score_scale) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const auto n = q.dim(0), d = q.dim(1), m = k.dim(0), dv = v.dim(1);
  if (k.dim(1) != d || v.dim(0) != m) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) + ", v " +
                         shape_string(v.shape()));
  }
  const auto qv = q.data(), kv = k.data(), vv = v.data();
  std::vector<double> p(n * m), out(n * dv), terms(m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += qv[i * d + t] * kv[j * d + t];
      p[i * m + j] = s * score_scale;
      mx = std::max(mx, p[i * m + j]);
    }
    for (std::size_t j = 0; j < m; ++j) terms[j] = std::exp(p[i * m + j] - mx);
    const double z = exact_sum(terms);
    for (std::size_t j = 0; j < m; ++j) p[i * m + j] = terms[j] / z;
    for (std::size_t c = 0; c < dv; ++c) {
      for (std::size_t j = 0; j < m; ++j) terms[j] = p[i * m + j] * vv[j * dv + c];
      out[i * dv + c] = exact_sum(terms);
    }
  }
  return make_result(
      "attention", {n, dv}, std::move(out), {q, k, v},
      [n, d, m, dv, score_scale, p = std::move(p)](const Node& self, std::span<const double> g, GradStore& store) {
        const auto& qd = in_data(self, 0);
        const auto& kd = in_data(self, 1);
        const auto& vd = in_data(self, 2);
        if (in_grad(self, 2)) {
          // dV = P^T dO
          gemm_tn_acc(n, m, dv, p.data(), g.data(), store.buffer(*self.inputs[2]).data());
        }
        if (!in_grad(self, 0) && !in_grad(self, 1)) return;
        // dP = dO V^T ; dS = P * (dP - rowsum(dP * P)) * scale
        std::vector<double> ds(n * m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            double dp = 0.0;
            for (std::size_t c = 0; c < dv; ++c) dp += g[i * dv + c] * vd[j * dv + c];
            ds[i * m + j] = dp;
            dot += dp * p[i * m + j];
          }
          for (std::size_t j = 0; j < m; ++j) ds[i * m + j] = p[i * m + j] * (ds[i * m + j] - dot) * score_scale;
        }
        if (in_grad(self, 0)) gemm_acc(n, m, d, ds.data(), kd.data(), store.buffer(*self.inputs[0]).data());
        if (in_grad(self, 1)) gemm_tn_acc(n, m, d, ds.data(), qd.data(), store.buffer(*self.inputs[1]).data());
      });
}

Tensor segment_max(const Tensor& x, std::size_t group) {
  require_matrix(x, "segment_max");
  const auto n = x.dim(0), d = x.dim(1);
  if (n == 0 || group == 0) throw DomainError("segment_max: empty set");
  if (n % group != 0) {
    throw DimensionError("segment_max: " + std::to_string(n) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const auto groups = n / group;
  const auto xv = x.data();
  std::vector<double> out(groups * d);
  std::vector<std::size_t> arg(groups * d);
  for (std::size_t s = 0; s < groups; ++s) {
    const std::size_t base = s * group;
    for (std::size_t j = 0; j < d; ++j) {
      out[s * d + j] = xv[base * d + j];
      arg[s * d + j] = base;
    }
    for (std::size_t r = base + 1; r < base + group; ++r)
      for (std::size_t j = 0; j < d; ++j)
        if (xv[r * d + j] > out[s * d + j]) {
          out[s * d + j] = xv[r * d + j];
          arg[s * d + j] = r;
        }
  }
  return make_result("segment_max", {groups, d}, std::move(out), {x},
                     [d, arg = std::move(arg)](const Node& self, std::span<const double> g, GradStore& store) {
                       auto& gx = store.buffer(*self.inputs[0]);
                       for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o] * d + o % d] += g[o];
                     });
}

Tensor max_reduce(const Tensor& x) {
  require_matrix(x, "max_reduce");
  if (x.dim(0) == 0) throw DomainError("max_reduce: empty set");
  return reshape(segment_max(x, x.dim(0)), {x.dim(1)});
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("sum", {1}, {s}, {x}, [](const Node& self, std::span<const double> g, GradStore& store) {
    auto& gx = store.buffer(*self.inputs[0]);
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const auto n = x.dim(0), d = x.dim(1);
  if (rows.empty()) throw DomainError("gather_rows: empty index set");
  std::vector<double> out(rows.size() * d);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DomainError("gather_rows: row index " + std::to_string(rows[r]) + " out of range");
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result("gather_rows", {rows.size(), d}, std::move(out), {x},
                     [d, idx = std::move(idx)](const Node& self, std::span<const double> g, GradStore& store) {
                       auto& gx = store.buffer(*self.inputs[0]);
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += g[r * d + j];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DomainError("concat_cols: nothing to concatenate");
  const auto n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != n) {
      throw DimensionError("concat_cols: " + shape_string(p.shape()) + " does not have " + std::to_string(n) +
                           " rows");
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    offset += widths[k];
  }
  return make_result("concat_cols", {n, total}, std::move(out), parts,
                     [n, total, widths](const Node& self, std::span<const double> g, GradStore& store) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (in_grad(self, k)) {
                           auto& gp = store.buffer(*self.inputs[k]);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g[i * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DomainError("concat_rows: nothing to concatenate");
  const auto d = parts[0].cols();
  std::vector<double> out;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() > 2 || p.cols() != d) {
      throw DimensionError("concat_rows: " + shape_string(p.shape()) + " does not have " + std::to_string(d) +
                           " columns");
    }
    out.insert(out.end(), p.data().begin(), p.data().end());
    rows += p.rows();
  }
  return make_result("concat_rows", {rows, d}, std::move(out), parts,
                     [](const Node& self, std::span<const double> g, GradStore& store) {
                       std::size_t off = 0;
                       for (const auto& in : self.inputs) {
                         if (in->requires_grad) store.accumulate(*in, g.subspan(off, in->data.size()));
                         off += in->data.size();
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const auto n = x.dim(0), d = x.dim(1);
  if (begin >= end || end > d) throw DimensionError("slice_cols: bad range for " + shape_string(x.shape()));
  const auto w = end - begin;
  std::vector<double> out(n * w);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * d + begin + j];
  return make_result("slice_cols", {n, w}, std::move(out), {x},
                     [n, d, w, begin](const Node& self, std::span<const double> g, GradStore& store) {
                       auto& gx = store.buffer(*self.inputs[0]);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < w; ++j) gx[i * d + begin + j] += g[i * w + j];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  const auto d = x.dim(1);
  if (begin >= end || end > x.dim(0)) throw DimensionError("slice_rows: bad range for " + shape_string(x.shape()));
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                          x.data().begin() + static_cast<std::ptrdiff_t>(end * d));
  return make_result("slice_rows", {end - begin, d}, std::move(out), {x},
                     [begin, d](const Node& self, std::span<const double> g, GradStore& store) {
                       auto& gx = store.buffer(*self.inputs[0]);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [](const Node& self, std::span<const double> g, GradStore& store) {
                       store.accumulate(*self.inputs[0], g);
                     });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size()) {
    throw DimensionError("mse_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  }
  const auto n = pred.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return make_result("mse_loss", {1}, {s / static_cast<double>(n)}, {pred, target},
                     [n](const Node& self, std::span<const double> g, GradStore& store) {
                       const auto& p = in_data(self, 0);
                       const auto& t = in_data(self, 1);
                       const double c = 2.0 * g[0] / static_cast<double>(n);
                       if (in_grad(self, 0)) {
                         auto& gp = store.buffer(*self.inputs[0]);
                         for (std::size_t i = 0; i < n; ++i) gp[i] += c * (p[i] - t[i]);
                       }
                       if (in_grad(self, 1)) {
                         auto& gt = store.buffer(*self.inputs[1]);
                         for (std::size_t i = 0; i < n; ++i) gt[i] -= c * (p[i] - t[i]);
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const auto b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) +
                         " rows");
  }
  const auto lv = logits.data();
  std::vector<double> prob(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw DomainError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(k) +
                        ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, lv[i * k + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(lv[i * k + c] - mx);
    for (std::size_t c = 0; c < k; ++c) prob[i * k + c] = std::exp(lv[i * k + c] - mx) / z;
    loss -= lv[i * k + static_cast<std::size_t>(labels[i])] - mx - std::log(z);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result("cross_entropy", {1}, {loss / static_cast<double>(b)}, {logits},
                     [b, k, prob = std::move(prob), lab = std::move(lab)](const Node& self, std::span<const double> g,
                                                                          GradStore& store) {
                       auto& gl = store.buffer(*self.inputs[0]);
                       const double c = g[0] / static_cast<double>(b);
                       for (std::size_t i = 0; i < b; ++i)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0;
                           gl[i * k + j] += c * (prob[i * k + j] - onehot);
                         }
                     });
}

}  // namespace copp::ad
