#pragma once

// Standard layers built from numcore ops. Every module exposes
// `visit(prefix, f)` calling f(name, Tensor&) for each parameter in a fixed
// order; parameter listing, deep copies and checkpoints are built on it.

#include <string>
#include <utility>
#include <vector>

#include "splice/numcore/ops.hpp"
#include "splice/numcore/rng.hpp"

namespace splice::nc {

using Params = std::vector<std::pair<std::string, Tensor>>;

template <class Module>
Params parameters(Module& m, const std::string& prefix = "") {
  Params out;
  m.visit(prefix, [&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

// Copy with freshly allocated parameter storage.
template <class Module>
Module deep_copy(const Module& m) {
  Module copy = m;
  copy.visit("", [](const std::string&, Tensor& t) {
    const bool rg = t.requires_grad();
    t = t.detach();
    t.set_requires_grad(rg);
  });
  return copy;
}

std::size_t count_parameters(const Params& params);
// Order-sensitive FNV-1a over the raw parameter bytes.
std::uint64_t checksum(const Params& params);
void zero_grad(Params& params);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight);
    f(prefix + "bias", bias);
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "gain", gain);
    f(prefix + "bias", bias);
  }
};

// dims = {in, h1, ..., out}. Hidden layers: Linear -> [LayerNorm] -> GELU.
struct Mlp {
  std::vector<Linear> layers;
  std::vector<LayerNorm> norms;

  Mlp() = default;
  Mlp(const std::vector<std::size_t>& dims, bool layer_norm, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "l" + std::to_string(i) + ".", f);
    for (std::size_t i = 0; i < norms.size(); ++i) norms[i].visit(prefix + "ln" + std::to_string(i) + ".", f);
  }
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng);
  // x: [batch*seq, d_model]
  Tensor operator()(const Tensor& x, std::size_t seq_len, const AttentionMask* mask) const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    wq.visit(prefix + "q.", f);
    wk.visit(prefix + "k.", f);
    wv.visit(prefix + "v.", f);
    wo.visit(prefix + "o.", f);
  }
};

// Pre-norm encoder block: x + MHA(LN(x)), then h + FFN(LN(h)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len, const AttentionMask* mask) const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(prefix + "ln1.", f);
    attn.visit(prefix + "attn.", f);
    ln2.visit(prefix + "ln2.", f);
    ff1.visit(prefix + "ff1.", f);
    ff2.visit(prefix + "ff2.", f);
  }
};

struct TransformerConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ff_mult = 4;
};

struct Transformer {
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;

  Transformer() = default;
  Transformer(const TransformerConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len, const AttentionMask* mask = nullptr) const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + "b" + std::to_string(i) + ".", f);
    final_norm.visit(prefix + "ln_f.", f);
  }
};

// Learned [rows, dim] table, e.g. positional encodings or special tokens.
struct Embedding {
  Tensor table;

  Embedding() = default;
  Embedding(std::size_t rows, std::size_t dim, double init_std, Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "table", table);
  }
};

// Fixed sinusoidal features of a scalar, [1, dim].
std::vector<double> sinusoidal_features(double position, std::size_t dim);

}  // namespace splice::nc
