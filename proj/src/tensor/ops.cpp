#include "adaptlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace adaptlab::ops {

namespace {

using detail::Node;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<const Tensor*> inputs,
                   std::function<void(Node&)> bw) {
  Tensor out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (!needs) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (const Tensor* t : inputs) node.parents.push_back(t->node());
  node.backward = std::move(bw);
  return out;
}

// Gradient buffer of a parent, or nullptr when it does not want one.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.ensure_grad();
}

void require_rank2(const Tensor& t, const char* op) {
  ADAPTLAB_REQUIRE(t.defined() && t.rank() == 2,
                   std::string(op) + ": expected a rank-2 tensor, got " +
                       (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
}

// C[m x n] += A[m x k] * B[k x n], row-major. Four rows of C share each
// row of B; every element sums over p in ascending order.
void gemm_accumulate(double* C, const double* A, const double* B, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = C + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = A[i * k + p], a1 = A[(i + 1) * k + p], a2 = A[(i + 2) * k + p], a3 = A[(i + 3) * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double b = brow[j];
        c0[j] += a0 * b;
        c1[j] += a1 * b;
        c2[j] += a2 * b;
        c3[j] += a3 * b;
      }
    }
  }
  for (; i < m; ++i) {
    double* row = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

std::vector<double> transposed(const double* X, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = X[r * cols + c];
  return t;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  ADAPTLAB_REQUIRE(b.rows() == k, "matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                                      shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_accumulate(out.data(), a.values().data(), b.values().data(), m, k, n);
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->data.data();
    const double* B = self.parents[1]->data.data();
    if (auto* ga = parent_grad(self, 0)) {
      const auto bt = transposed(B, k, n);
      gemm_accumulate(ga->data(), G, bt.data(), m, n, k);
    }
    if (auto* gb = parent_grad(self, 1)) {
      const auto at = transposed(A, m, k);
      gemm_accumulate(gb->data(), at.data(), G, k, m, n);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  ADAPTLAB_REQUIRE(b.cols() == k, "matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " x " +
                                      shape_string(b.shape()) + "^T");
  std::vector<double> out(m * n, 0.0);
  const auto bt = transposed(b.values().data(), n, k);
  gemm_accumulate(out.data(), a.values().data(), bt.data(), m, k, n);
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->data.data();
    const double* B = self.parents[1]->data.data();
    if (auto* ga = parent_grad(self, 0)) gemm_accumulate(ga->data(), G, B, m, n, k);
    if (auto* gb = parent_grad(self, 1)) {
      const auto gt = transposed(G, m, n);
      gemm_accumulate(gb->data(), gt.data(), A, n, m, k);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  ADAPTLAB_REQUIRE(a.shape() == b.shape(),
                   "add: shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (auto* g = parent_grad(self, i))
        for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[j];
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  ADAPTLAB_REQUIRE(bias.numel() == n, "add_row: bias length must equal column count");
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result(a.shape(), std::move(out), {&a, &bias}, [m, n](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[j];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  ADAPTLAB_REQUIRE(a.shape() == b.shape(),
                   "mul: shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[j] * B[j];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[j] * A[j];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[j] * factor;
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * std::numbers::sqrt2 / 2.0));
  return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& X = self.parents[0]->data;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t j = 0; j < g->size(); ++j) {
      const double x = X[j];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      (*g)[j] += self.grad[j] * (cdf + x * pdf);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row(matmul(x, weight), bias);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  ADAPTLAB_REQUIRE(gain.numel() == n && bias.numel() == n, "layer_norm: gain/bias length must equal columns");
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {&x, &gain, &bias},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const auto& G = self.grad;
                       const auto& gv = self.parents[1]->data;
                       if (auto* gx = parent_grad(self, 0)) {
                         std::vector<double> dxhat(n);
                         for (std::size_t i = 0; i < m; ++i) {
                           double mean_d = 0.0, mean_dx = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             dxhat[j] = G[i * n + j] * gv[j];
                             mean_d += dxhat[j];
                             mean_dx += dxhat[j] * xhat[i * n + j];
                           }
                           mean_d /= static_cast<double>(n);
                           mean_dx /= static_cast<double>(n);
                           for (std::size_t j = 0; j < n; ++j)
                             (*gx)[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                         }
                       }
                       if (auto* gg = parent_grad(self, 1))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) (*gg)[j] += G[i * n + j] * xhat[i * n + j];
                       if (auto* gb = parent_grad(self, 2))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) (*gb)[j] += G[i * n + j];
                     });
}

Tensor softmax_rows(const Tensor& x, std::span<const double> additive_mask) {
  require_rank2(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  ADAPTLAB_REQUIRE(additive_mask.empty() || additive_mask.size() == m * n,
                   "softmax_rows: mask must match the input size");
  std::vector<double> out(m * n);
  auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double v = xv[i * n + j] + (additive_mask.empty() ? 0.0 : additive_mask[i * n + j]);
      out[i * n + j] = v;
      mx = std::max(mx, v);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(out[i * n + j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_result(x.shape(), std::move(out), {&x}, [m, n](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& Y = self.data;
    const auto& G = self.grad;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += G[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += Y[i * n + j] * (G[i * n + j] - dot);
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank2(table, "gather_rows");
  ADAPTLAB_REQUIRE(!indices.empty(), "gather_rows: no indices");
  const std::size_t v = table.rows(), n = table.cols();
  std::vector<double> out(indices.size() * n);
  auto tv = table.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    ADAPTLAB_REQUIRE(indices[i] < v, "gather_rows: index " + std::to_string(indices[i]) + " out of range " +
                                         std::to_string(v));
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(indices[i] * n), n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result({indices.size(), n}, std::move(out), {&table}, [n, idx = std::move(idx)](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[idx[i] * n + j] += self.grad[i * n + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  ADAPTLAB_REQUIRE(begin < end && end <= x.rows(), "slice_rows: bad range");
  const std::size_t n = x.cols();
  auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * n));
  return make_result({end - begin, n}, std::move(out), {&x}, [begin, n](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t j = 0; j < self.grad.size(); ++j) (*g)[begin * n + j] += self.grad[j];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  ADAPTLAB_REQUIRE(begin < end && end <= x.cols(), "slice_cols: bad range");
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  auto xv = x.values();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * n + begin + j];
  return make_result({m, w}, std::move(out), {&x}, [m, n, w, begin](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) (*g)[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  ADAPTLAB_REQUIRE(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) {
    ADAPTLAB_REQUIRE(p.cols() == n, "concat_rows: column counts differ");
    m += p.rows();
    inputs.push_back(&p);
  }
  std::vector<double> out;
  out.reserve(m * n);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result({m, n}, std::move(out), std::move(inputs), [offsets = std::move(offsets)](Node& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k)
      if (auto* g = parent_grad(self, k))
        for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[offsets[k] + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  ADAPTLAB_REQUIRE(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<const Tensor*> inputs;
  std::vector<std::size_t> widths, offsets;
  for (const auto& p : parts) {
    ADAPTLAB_REQUIRE(p.rows() == m, "concat_cols: row counts differ");
    offsets.push_back(n);
    widths.push_back(p.cols());
    n += p.cols();
    inputs.push_back(&p);
  }
  std::vector<double> out(m * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * n + offsets[k] + j] = v[i * widths[k] + j];
  }
  return make_result({m, n}, std::move(out), std::move(inputs),
                     [m, n, widths = std::move(widths), offsets = std::move(offsets)](Node& self) {
                       for (std::size_t k = 0; k < widths.size(); ++k)
                         if (auto* g = parent_grad(self, k))
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               (*g)[i * widths[k] + j] += self.grad[i * n + offsets[k] + j];
                     });
}

Tensor repeat_rows(const Tensor& x, std::size_t times, std::size_t out_rows) {
  require_rank2(x, "repeat_rows");
  ADAPTLAB_REQUIRE(times >= 1 && out_rows >= 1 && out_rows <= x.rows() * times,
                   "repeat_rows: output length exceeds repeated input");
  const std::size_t n = x.cols();
  auto xv = x.values();
  std::vector<double> out(out_rows * n);
  for (std::size_t i = 0; i < out_rows; ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((i / times) * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  return make_result({out_rows, n}, std::move(out), {&x}, [times, out_rows, n](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < out_rows; ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[(i / times) * n + j] += self.grad[i * n + j];
  });
}

Tensor unfold_rows(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad_left,
                   std::size_t pad_right) {
  require_rank2(x, "unfold_rows");
  ADAPTLAB_REQUIRE(kernel >= 1 && stride >= 1, "unfold_rows: kernel and stride must be positive");
  const std::size_t n = x.rows(), d = x.cols();
  const std::size_t padded = n + pad_left + pad_right;
  ADAPTLAB_REQUIRE(padded >= kernel, "unfold_rows: input shorter than kernel");
  const std::size_t out_rows = (padded - kernel) / stride + 1;
  const std::size_t w = kernel * d;
  auto xv = x.values();
  std::vector<double> out(out_rows * w, 0.0);
  // src(j, t) is the input row feeding window j, tap t; -1 when padding.
  auto src = [=](std::size_t j, std::size_t t) -> std::ptrdiff_t {
    auto r = static_cast<std::ptrdiff_t>(j * stride + t) - static_cast<std::ptrdiff_t>(pad_left);
    return (r < 0 || r >= static_cast<std::ptrdiff_t>(n)) ? -1 : r;
  };
  for (std::size_t j = 0; j < out_rows; ++j)
    for (std::size_t t = 0; t < kernel; ++t) {
      auto r = src(j, t);
      if (r < 0) continue;
      std::copy_n(xv.begin() + r * static_cast<std::ptrdiff_t>(d), d,
                  out.begin() + static_cast<std::ptrdiff_t>(j * w + t * d));
    }
  return make_result({out_rows, w}, std::move(out), {&x}, [=](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t j = 0; j < out_rows; ++j)
      for (std::size_t t = 0; t < kernel; ++t) {
        auto r = src(j, t);
        if (r < 0) continue;
        for (std::size_t c = 0; c < d; ++c)
          (*g)[static_cast<std::size_t>(r) * d + c] += self.grad[j * w + t * d + c];
      }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_rank2(logits, "cross_entropy");
  const std::size_t m = logits.rows(), v = logits.cols();
  ADAPTLAB_REQUIRE(targets.size() == m, "cross_entropy: one target per row required");
  auto lv = logits.values();
  std::vector<double> probs(m * v);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    ADAPTLAB_REQUIRE(targets[i] < v, "cross_entropy: target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, lv[i * v + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(lv[i * v + j] - mx);
      total += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= total;
    loss += std::log(total) + mx - lv[i * v + targets[i]];
  }
  loss /= static_cast<double>(m);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return make_result({1}, {loss}, {&logits}, [m, v, probs = std::move(probs), tg = std::move(tg)](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const double upstream = self.grad[0] / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < v; ++j)
        (*g)[i * v + j] += upstream * (probs[i * v + j] - (j == tg[i] ? 1.0 : 0.0));
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, {&x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
  ADAPTLAB_REQUIRE(x.shape() == weights.shape(), "weighted_sum: shapes differ");
  auto xv = x.values(), wv = weights.values();
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * wv[i];
  std::vector<double> w(wv.begin(), wv.end());
  return make_result({1}, {total}, {&x}, [w = std::move(w)](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[0] * w[i];
  });
}

Tensor average(std::span<const Tensor> parts) {
  ADAPTLAB_REQUIRE(!parts.empty(), "average: nothing to average");
  Tensor acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return parts.size() == 1 ? acc : scale(acc, 1.0 / static_cast<double>(parts.size()));
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  ADAPTLAB_REQUIRE(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (rate == 0.0 || !grad_enabled()) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask = Tensor::zeros(x.shape());
  for (auto& v : mask.mutable_values()) v = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(x, mask);
}

}  // namespace adaptlab::ops
