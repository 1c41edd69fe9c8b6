#pragma once

// Dense row-major kernels used by the autodiff ops.
//
// Two implementations of every kernel are kept:
//   serial::   textbook loops, the reference the tests compare against
//   parallel:: OpenMP over disjoint output blocks
//
// Every output element of a parallel kernel is produced by exactly one
// thread with a fixed accumulation order, so results do not depend on the
// thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace splice::nc::kernels {

// Scaled dot-product attention geometry for a stack of `batch` sequences of
// length `seq`, model width `heads * head_dim`. Tensors are [batch*seq, width].
struct AttentionShape {
  std::size_t batch = 1;
  std::size_t seq = 1;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  std::size_t width() const { return heads * head_dim; }
};

namespace serial {

// c[m,n] (+)= a[m,k] * b[k,n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// c[m,n] (+)= a[m,k] * b[n,k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// c[k,n] (+)= a[m,k]^T * b[m,n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// probs: [batch, heads, seq, seq]. mask (optional, seq*seq or batch*seq*seq,
// nonzero = blocked).
void attention_forward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<const std::uint8_t> mask,
                       std::span<double> probs, std::span<double> out);
// Accumulates into dq, dk, dv.
void attention_backward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> dout, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv);

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void attention_forward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<const std::uint8_t> mask,
                       std::span<double> probs, std::span<double> out);
void attention_backward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> dout, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv);

}  // namespace parallel

}  // namespace splice::nc::kernels
