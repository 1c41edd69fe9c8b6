#include "splice/numcore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace splice::nc::kernels {

namespace {

constexpr std::size_t kParallelThreshold = 1 << 15;

void prepare(std::span<double> c, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * b[i * n + j];
      c[p * n + j] = accumulate ? c[p * n + j] + acc : acc;
    }
}

void attention_forward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<const std::uint8_t> mask,
                       std::span<double> probs, std::span<double> out) {
  const std::size_t w = s.width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.heads; ++h) {
      double* p = probs.data() + (b * s.heads + h) * s.seq * s.seq;
      for (std::size_t i = 0; i < s.seq; ++i) {
        double mx = neg_inf;
        for (std::size_t j = 0; j < s.seq; ++j) {
          double logit = neg_inf;
          if (mask.empty() || !mask[(mask.size() > s.seq * s.seq ? b * s.seq * s.seq : 0) + i * s.seq + j]) {
            logit = 0.0;
            for (std::size_t d = 0; d < s.head_dim; ++d)
              logit += q[(b * s.seq + i) * w + h * s.head_dim + d] * k[(b * s.seq + j) * w + h * s.head_dim + d];
            logit *= scale;
          }
          p[i * s.seq + j] = logit;
          mx = std::max(mx, logit);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < s.seq; ++j) {
          const double e = std::isinf(p[i * s.seq + j]) ? 0.0 : std::exp(p[i * s.seq + j] - mx);
          p[i * s.seq + j] = e;
          z += e;
        }
        for (std::size_t j = 0; j < s.seq; ++j) p[i * s.seq + j] /= z;
        for (std::size_t d = 0; d < s.head_dim; ++d) {
          double acc = 0.0;
          for (std::size_t j = 0; j < s.seq; ++j)
            acc += p[i * s.seq + j] * v[(b * s.seq + j) * w + h * s.head_dim + d];
          out[(b * s.seq + i) * w + h * s.head_dim + d] = acc;
        }
      }
    }
}

void attention_backward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> dout, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv) {
  const std::size_t w = s.width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
  std::vector<double> dp(s.seq);
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.heads; ++h) {
      const double* p = probs.data() + (b * s.heads + h) * s.seq * s.seq;
      auto at = [&](std::size_t row, std::size_t d) { return (b * s.seq + row) * w + h * s.head_dim + d; };
      for (std::size_t i = 0; i < s.seq; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < s.seq; ++j) {
          double g = 0.0;
          for (std::size_t d = 0; d < s.head_dim; ++d) g += dout[at(i, d)] * v[at(j, d)];
          dp[j] = g;
          dot += g * p[i * s.seq + j];
        }
        for (std::size_t j = 0; j < s.seq; ++j) {
          const double pij = p[i * s.seq + j];
          for (std::size_t d = 0; d < s.head_dim; ++d) dv[at(j, d)] += pij * dout[at(i, d)];
          const double ds = pij * (dp[j] - dot) * scale;
          for (std::size_t d = 0; d < s.head_dim; ++d) {
            dq[at(i, d)] += ds * k[at(j, d)];
            dk[at(j, d)] += ds * q[at(i, d)];
          }
        }
      }
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels
// ---------------------------------------------------------------------------
namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  prepare(c, accumulate);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] = accumulate ? pc[i * n + j] + acc : acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  prepare(c, accumulate);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = pc + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = pa[i * k + p];
      const double* brow = pb + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

namespace {

// Gathers one head of one sequence transposed into a contiguous [head_dim, seq]
// block so the inner loops run over the sequence with unit stride.
void gather_head_t(const AttentionShape& s, std::span<const double> src, std::size_t b, std::size_t h,
                   double* dst) {
  const std::size_t w = s.width();
  for (std::size_t i = 0; i < s.seq; ++i) {
    const double* row = src.data() + (b * s.seq + i) * w + h * s.head_dim;
    for (std::size_t d = 0; d < s.head_dim; ++d) dst[d * s.seq + i] = row[d];
  }
}

void scatter_add_head_t(const AttentionShape& s, const double* src, std::size_t b, std::size_t h,
                        std::span<double> dst) {
  const std::size_t w = s.width();
  for (std::size_t i = 0; i < s.seq; ++i) {
    double* row = dst.data() + (b * s.seq + i) * w + h * s.head_dim;
    for (std::size_t d = 0; d < s.head_dim; ++d) row[d] += src[d * s.seq + i];
  }
}

}  // namespace

void attention_forward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<const std::uint8_t> mask,
                       std::span<double> probs, std::span<double> out) {
  const std::size_t w = s.width();
  const std::size_t L = s.seq;
  const std::size_t hd = s.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const long pairs = static_cast<long>(s.batch * s.heads);
#pragma omp parallel for schedule(static) if (s.batch * s.heads * L * L * hd > kParallelThreshold)
  for (long bh = 0; bh < pairs; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / s.heads;
    const std::size_t h = static_cast<std::size_t>(bh) % s.heads;
    std::vector<double> kt(L * hd), vt(L * hd);
    gather_head_t(s, k, b, h, kt.data());
    gather_head_t(s, v, b, h, vt.data());
    double* p = probs.data() + static_cast<std::size_t>(bh) * L * L;
    for (std::size_t i = 0; i < L; ++i) {
      double* prow = p + i * L;
      const double* qi = q.data() + (b * L + i) * w + h * hd;
      std::fill(prow, prow + L, 0.0);
      for (std::size_t d = 0; d < hd; ++d) {
        const double qd = qi[d] * scale;
        const double* kd = kt.data() + d * L;
        for (std::size_t j = 0; j < L; ++j) prow[j] += qd * kd[j];
      }
      double mx = -std::numeric_limits<double>::infinity();
      if (!mask.empty()) {
        const std::uint8_t* mrow = mask.data() + (mask.size() > L * L ? b * L * L : 0) + i * L;
        for (std::size_t j = 0; j < L; ++j)
          if (mrow[j]) prow[j] = -std::numeric_limits<double>::infinity();
      }
      for (std::size_t j = 0; j < L; ++j) mx = std::max(mx, prow[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        z += prow[j];
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j < L; ++j) prow[j] *= inv;
      double* oi = out.data() + (b * L + i) * w + h * hd;
      for (std::size_t d = 0; d < hd; ++d) {
        const double* vd = vt.data() + d * L;
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) acc += prow[j] * vd[j];
        oi[d] = acc;
      }
    }
  }
}

void attention_backward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> dout, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv) {
  const std::size_t w = s.width();
  const std::size_t L = s.seq;
  const std::size_t hd = s.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const long pairs = static_cast<long>(s.batch * s.heads);
#pragma omp parallel for schedule(static) if (s.batch * s.heads * L * L * hd > kParallelThreshold)
  for (long bh = 0; bh < pairs; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / s.heads;
    const std::size_t h = static_cast<std::size_t>(bh) % s.heads;
    std::vector<double> kt(L * hd), vt(L * hd), dkt(L * hd, 0.0), dvt(L * hd, 0.0), dp(L);
    gather_head_t(s, k, b, h, kt.data());
    gather_head_t(s, v, b, h, vt.data());
    const double* p = probs.data() + static_cast<std::size_t>(bh) * L * L;
    for (std::size_t i = 0; i < L; ++i) {
      const double* prow = p + i * L;
      const double* doi = dout.data() + (b * L + i) * w + h * hd;
      const double* qi = q.data() + (b * L + i) * w + h * hd;
      std::fill(dp.begin(), dp.end(), 0.0);
      for (std::size_t d = 0; d < hd; ++d) {
        const double g = doi[d];
        const double* vd = vt.data() + d * L;
        double* dvd = dvt.data() + d * L;
        for (std::size_t j = 0; j < L; ++j) {
          dp[j] += g * vd[j];
          dvd[j] += g * prow[j];
        }
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < L; ++j) dot += dp[j] * prow[j];
      // dp becomes dlogits
      for (std::size_t j = 0; j < L; ++j) dp[j] = prow[j] * (dp[j] - dot) * scale;
      double* dqi = dq.data() + (b * L + i) * w + h * hd;
      for (std::size_t d = 0; d < hd; ++d) {
        const double* kd = kt.data() + d * L;
        double* dkd = dkt.data() + d * L;
        const double qd = qi[d];
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          acc += dp[j] * kd[j];
          dkd[j] += dp[j] * qd;
        }
        dqi[d] += acc;
      }
    }
    scatter_add_head_t(s, dkt.data(), b, h, dk);
    scatter_add_head_t(s, dvt.data(), b, h, dv);
  }
}

}  // namespace parallel

}  // namespace splice::nc::kernels
