#include "splice/numcore/layers.hpp"

#include <cmath>
#include <cstring>

#include "splice/errors.hpp"

namespace splice::nc {

std::size_t count_parameters(const Params& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

std::uint64_t checksum(const Params& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : params) {
    feed(name.data(), name.size());
    feed(t.values().data(), t.numel() * sizeof(double));
  }
  return h;
}

void zero_grad(Params& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("Linear: zero-sized layer");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out), b(out);
  for (auto& x : w) x = (2.0 * rng.uniform() - 1.0) * bound;
  for (auto& x : b) x = (2.0 * rng.uniform() - 1.0) * bound;
  weight = Tensor({in, out}, std::move(w), true);
  bias = Tensor({out}, std::move(b), true);
}

LayerNorm::LayerNorm(std::size_t dim) : gain(Tensor::full({dim}, 1.0, true)), bias(Tensor::zeros({dim}, true)) {}

Mlp::Mlp(const std::vector<std::size_t>& dims, bool layer_norm, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("Mlp: need at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(dims[i], dims[i + 1], rng);
    if (layer_norm && i + 2 < dims.size()) norms.emplace_back(dims[i + 1]);
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) {
      if (!norms.empty()) h = norms[i](h);
      h = gelu(h);
    }
  }
  return h;
}

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t n_heads, Rng& rng)
    : wq(d_model, d_model, rng), wk(d_model, d_model, rng), wv(d_model, d_model, rng), wo(d_model, d_model, rng),
      heads(n_heads) {
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("MultiHeadAttention: d_model " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
}

Tensor MultiHeadAttention::operator()(const Tensor& x, std::size_t seq_len, const AttentionMask* mask) const {
  return wo(multi_head_attention(wq(x), wk(x), wv(x), heads, seq_len, mask));
}

TransformerBlock::TransformerBlock(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
    : ln1(d_model), ln2(d_model), attn(d_model, heads, rng), ff1(d_model, d_ff, rng), ff2(d_ff, d_model, rng) {}

Tensor TransformerBlock::operator()(const Tensor& x, std::size_t seq_len, const AttentionMask* mask) const {
  Tensor h = add(x, attn(ln1(x), seq_len, mask));
  return add(h, ff2(gelu(ff1(ln2(h)))));
}

Transformer::Transformer(const TransformerConfig& cfg, Rng& rng) : final_norm(cfg.d_model) {
  for (std::size_t i = 0; i < cfg.layers; ++i) blocks.emplace_back(cfg.d_model, cfg.heads, cfg.d_model * cfg.ff_mult, rng);
}

Tensor Transformer::operator()(const Tensor& x, std::size_t seq_len, const AttentionMask* mask) const {
  Tensor h = x;
  for (const auto& b : blocks) h = b(h, seq_len, mask);
  return final_norm(h);
}

Embedding::Embedding(std::size_t rows, std::size_t dim, double init_std, Rng& rng) {
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = init_std * rng.normal();
  table = Tensor({rows, dim}, std::move(v), true);
}

std::vector<double> sinusoidal_features(double position, std::size_t dim) {
  std::vector<double> out(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(position * freq);
    out[i + half] = std::cos(position * freq);
  }
  return out;
}

}  // namespace splice::nc
