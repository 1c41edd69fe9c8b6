#pragma once

// Differentiable primitives. Rank-2 tensors are [rows, cols] row-major;
// vectors broadcast along rows where noted.

#include <cstdint>
#include <vector>

#include "splice/numcore/tensor.hpp"

namespace splice::nc {

// elementwise, identical shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// a[r, c] + row[c]  /  a[r, c] * row[c]
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_row(const Tensor& a, const Tensor& row);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
// Exact Gaussian-CDF GELU.
Tensor gelu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [r, c] -> [c]
Tensor sum_axis0(const Tensor& a);
Tensor mean_axis0(const Tensor& a);
// [r, c] -> [r]
Tensor sum_axis1(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// y = x W + b, x [n, in], W [in, out], b [out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Normalises each row over the last axis (biased variance + eps), then gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// out[i] = a[index[i]] (rows); repeated indices accumulate gradient.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& index);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Mask for multi_head_attention: seq*seq (shared) or batch*seq*seq, nonzero
// entry (i, j) blocks query i from attending key j.
using AttentionMask = std::vector<std::uint8_t>;

// Scaled dot-product attention over `q,k,v` of shape [batch*seq, width],
// split into `n_heads` heads. Blocked logits are -inf before the softmax.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
                            std::size_t seq_len, const AttentionMask* mask = nullptr);

Tensor mse(const Tensor& pred, const Tensor& target);

}  // namespace splice::nc
