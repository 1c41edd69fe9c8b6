#include "splice/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splice/errors.hpp"
#include "splice/numcore/kernels.hpp"

namespace splice::nc {

namespace kp = kernels::parallel;
using detail::Node;

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}

void require_row(const Tensor& a, const Tensor& row, const char* op) {
  if (row.numel() != a.cols() || row.rank() > 1)
    throw DimensionError(std::string(op) + ": row vector " + shape_str(row.shape()) + " does not broadcast over " +
                         shape_str(a.shape()));
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

template <class F>
Tensor unary(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (wants(self, p)) {
        auto& g = self.parents[p]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (wants(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (wants(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same(a, b, "div");
  std::vector<double> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (wants(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / y[i];
    }
    if (wants(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * x[i] / (y[i] * y[i]);
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_row(a, row, "add_row");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  auto y = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += y[j];
  return make_op_result(a.shape(), std::move(out), {a, row}, [r, c](Node& self) {
    if (wants(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  require_row(a, row, "mul_row");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  auto x = a.values(), y = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * y[j];
  return make_op_result(a.shape(), std::move(out), {a, row}, [r, c](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (wants(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * y[j];
    }
    if (wants(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * x[i * c + j];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  auto out = unary(a, [s](double x) { return x * s; });
  return make_op_result(a.shape(), std::vector<double>(out.values().begin(), out.values().end()), {a},
                        [s](Node& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
                        });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& x : out) x += s;
  return make_op_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
  return make_op_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * x[i] * self.grad[i];
  });
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(x[i]);
  return make_op_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    // d sqrt(x)/dx is unbounded at 0; the subgradient 0 is used there.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.value[i] > 0.0) g[i] += self.grad[i] * 0.5 / self.value[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return make_op_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.values();
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
  return make_op_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
      g[i] += self.grad[i] * (cdf + x[i] * pdf);
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_op_result({}, {s}, {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis0(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(c, 0.0);
  auto x = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  return make_op_result({c}, std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j];
  });
}

Tensor mean_axis0(const Tensor& a) { return scale(sum_axis0(a), 1.0 / static_cast<double>(a.rows())); }

Tensor sum_axis1(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r, 0.0);
  auto x = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x[i * c + j];
  return make_op_result({r}, std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  kp::gemm_nn(a.values(), b.values(), out, m, k, n, false);
  return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (wants(self, 0)) kp::gemm_nt(self.grad, self.parents[1]->value, self.parents[0]->grad_buffer(), m, n, k, true);
    if (wants(self, 1)) kp::gemm_tn(self.parents[0]->value, self.grad, self.parents[1]->grad_buffer(), m, k, n, true);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  auto x = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return make_op_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in)
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  if (b.numel() != out_dim || b.rank() != 1)
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " + shape_str(w.shape()));
  std::vector<double> out(n * out_dim);
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * out_dim);
  kp::gemm_nn(x.values(), w.values(), out, n, in, out_dim, true);
  return make_op_result({n, out_dim}, std::move(out), {x, w, b}, [n, in, out_dim](Node& self) {
    if (wants(self, 0)) kp::gemm_nt(self.grad, self.parents[1]->value, self.parents[0]->grad_buffer(), n, out_dim, in, true);
    if (wants(self, 1)) kp::gemm_tn(self.parents[0]->value, self.grad, self.parents[1]->grad_buffer(), n, in, out_dim, true);
    if (wants(self, 2)) {
      auto& g = self.parents[2]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) g[j] += self.grad[i * out_dim + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t c = x.cols();
  if (c == 0 || x.rank() == 0) throw DimensionError("layer_norm: last dimension is empty in " + shape_str(x.shape()));
  if (gain.numel() != c || bias.numel() != c)
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + " do not match last dim of " +
                         shape_str(x.shape()));
  const std::size_t r = x.rows();
  std::vector<double> xhat(r * c), inv_std(r), out(r * c);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv[i * c + j] - mu) * (xv[i * c + j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return make_op_result(x.shape(), std::move(out), {x, gain, bias},
                        [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                          const auto& gv = self.parents[1]->value;
                          if (wants(self, 0)) {
                            auto& g = self.parents[0]->grad_buffer();
                            for (std::size_t i = 0; i < r; ++i) {
                              double m1 = 0.0, m2 = 0.0;
                              for (std::size_t j = 0; j < c; ++j) {
                                const double dxh = self.grad[i * c + j] * gv[j];
                                m1 += dxh;
                                m2 += dxh * xhat[i * c + j];
                              }
                              m1 /= static_cast<double>(c);
                              m2 /= static_cast<double>(c);
                              for (std::size_t j = 0; j < c; ++j) {
                                const double dxh = self.grad[i * c + j] * gv[j];
                                g[i * c + j] += inv_std[i] * (dxh - m1 - xhat[i * c + j] * m2);
                              }
                            }
                          }
                          if (wants(self, 1)) {
                            auto& g = self.parents[1]->grad_buffer();
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * xhat[i * c + j];
                          }
                          if (wants(self, 2)) {
                            auto& g = self.parents[2]->grad_buffer();
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                          }
                        });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& index) {
  const std::size_t c = a.cols(), r = a.rows();
  std::vector<double> out(index.size() * c);
  auto x = a.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) throw DimensionError("gather_rows: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(x.begin() + index[i] * c, c, out.begin() + i * c);
  }
  return make_op_result({index.size(), c}, std::move(out), {a}, [index, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[index[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) throw DimensionError("slice_rows: bad range");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather_rows(a, idx);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()));
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_op_result({total, c}, std::move(out), parts, [c](Node& self) {
    std::size_t offset = 0;
    for (auto& parent : self.parents) {
      const std::size_t n = parent->value.size();
      if (parent->requires_grad) {
        auto& g = parent->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
    (void)c;
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].values();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(x.begin() + i * widths[k], widths[k], out.begin() + i * total + offset);
    offset += widths[k];
  }
  return make_op_result({r, total}, std::move(out), parts, [r, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (self.parents[k]->requires_grad) {
        auto& g = self.parents[k]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + offset + j];
      }
      offset += widths[k];
    }
  });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
                            std::size_t seq_len, const AttentionMask* mask) {
  require_rank2(q, "multi_head_attention");
  require_same(q, k, "multi_head_attention");
  require_same(q, v, "multi_head_attention");
  const std::size_t width = q.dim(1);
  if (n_heads == 0 || width % n_heads != 0)
    throw ConfigError("multi_head_attention: model dim " + std::to_string(width) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  if (seq_len == 0 || q.dim(0) % seq_len != 0)
    throw DimensionError("multi_head_attention: " + std::to_string(q.dim(0)) + " rows not a multiple of seq_len " +
                         std::to_string(seq_len));
  const std::size_t batch = q.dim(0) / seq_len;
  if (mask) {
    const std::size_t sq = seq_len * seq_len;
    if (mask->size() != sq && mask->size() != batch * sq)
      throw DimensionError("multi_head_attention: mask must be seq x seq or batch x seq x seq");
    for (std::size_t r = 0; r < mask->size() / seq_len; ++r) {
      bool any = false;
      for (std::size_t j = 0; j < seq_len; ++j) any |= !(*mask)[r * seq_len + j];
      if (!any) throw DimensionError("multi_head_attention: query " + std::to_string(r % seq_len) + " has every key masked");
    }
  }
  kernels::AttentionShape s{q.dim(0) / seq_len, seq_len, n_heads, width / n_heads};
  std::vector<double> probs(s.batch * s.heads * s.seq * s.seq);
  std::vector<double> out(q.numel());
  std::span<const std::uint8_t> mspan;
  if (mask) mspan = *mask;
  kp::attention_forward(s, q.values(), k.values(), v.values(), mspan, probs, out);
  return make_op_result(q.shape(), std::move(out), {q, k, v}, [s, probs = std::move(probs)](Node& self) {
    auto& P = self.parents;
    std::vector<double> dq(P[0]->value.size(), 0.0), dk(dq.size(), 0.0), dv(dq.size(), 0.0);
    kp::attention_backward(s, P[0]->value, P[1]->value, P[2]->value, probs, self.grad, dq, dk, dv);
    std::vector<double>* grads[3] = {&dq, &dk, &dv};
    for (std::size_t p = 0; p < 3; ++p)
      if (P[p]->requires_grad) {
        auto& g = P[p]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*grads[p])[i];
      }
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) { return mean(square(sub(pred, target))); }

}  // namespace splice::nc
