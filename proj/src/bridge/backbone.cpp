#include <algorithm>
#include <cmath>

#include "splice/bridge/bridge.hpp"
#include "splice/errors.hpp"

namespace splice::bridge {

using nc::Tensor;

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Deterministic: return "deterministic";
    case Mode::Diffusion: return "diffusion";
    case Mode::FlowMatching: return "flow-matching";
  }
  return "unknown";
}

BridgeNet::BridgeNet(const BridgeConfig& c, Mode m, nc::Rng& rng) : cfg(c), mode(m) {
  const std::size_t dm = c.backbone.d_model;
  ctx_proj = nc::Linear(c.repr_dim, dm, rng);
  cov_proj = nc::Linear(std::max<std::size_t>(c.cov_dim, 1), dm, rng);
  pos = nc::Embedding(c.max_len, dm, 0.02, rng);
  if (m == Mode::Deterministic) {
    mask_token = nc::Embedding(1, dm, 0.02, rng);
  } else {
    noisy_proj = nc::Linear(c.repr_dim, dm, rng);
    time_proj = nc::Linear(dm, dm, rng);
    null_token = nc::Embedding(1, dm, 0.02, rng);
  }
  backbone = nc::Transformer(c.backbone, rng);
  out = nc::Linear(dm, c.repr_dim, rng);
}

BridgeInput BridgeInput::repeat(std::size_t n) const {
  if (batch != 1) throw DimensionError("BridgeInput::repeat: expects a single window");
  BridgeInput r = *this;
  r.batch = n;
  r.ctx.clear();
  r.cov.clear();
  for (std::size_t i = 0; i < n; ++i) {
    r.ctx.insert(r.ctx.end(), ctx.begin(), ctx.end());
    r.cov.insert(r.cov.end(), cov.begin(), cov.end());
  }
  return r;
}

namespace {

// Broadcast a per-row scalar over `width` columns as a constant tensor.
Tensor row_scalars(const std::vector<double>& v, std::size_t width) {
  std::vector<double> full(v.size() * width);
  for (std::size_t r = 0; r < v.size(); ++r) std::fill_n(full.begin() + static_cast<std::ptrdiff_t>(r * width), width, v[r]);
  return Tensor({v.size(), width}, std::move(full));
}

}  // namespace

Tensor bridge_forward(const BridgeNet& net, const BridgeInput& in, const Tensor* z_t, const std::vector<double>& time,
                      const std::vector<std::uint8_t>& null_ctx) {
  const std::size_t B = in.batch, C = in.ctx_len, G = in.gap_len, L = in.length();
  const std::size_t p = net.cfg.repr_dim, c = net.cfg.cov_dim, dm = net.cfg.backbone.d_model;
  if (L > net.cfg.max_len) throw DimensionError("bridge: window of " + std::to_string(L) + " days exceeds max_len");
  if (G == 0) throw DimensionError("bridge: empty gap");
  if (in.ctx.size() != B * C * p) throw DimensionError("bridge: context does not match mask/context length");
  if (in.cov.size() != B * L * c) throw DimensionError("bridge: covariates do not cover every window day");
  const bool generative = net.mode != Mode::Deterministic;
  if (generative) {
    if (!z_t || z_t->rank() != 2 || z_t->dim(0) != B * G || z_t->dim(1) != p)
      throw DimensionError("bridge: generative mode needs z_t of shape [batch*gap, repr]");
    if (time.size() != B) throw DimensionError("bridge: need one time value per batch element");
  }
  if (!null_ctx.empty() && null_ctx.size() != B) throw DimensionError("bridge: null_ctx needs one flag per batch element");
  const bool any_null = !null_ctx.empty() && std::any_of(null_ctx.begin(), null_ctx.end(), [](auto f) { return f != 0; });

  Tensor ctx_tok = net.ctx_proj(Tensor({B * C, p}, in.ctx));
  if (any_null) {
    std::vector<double> keep(B * C), drop(B * C);
    for (std::size_t r = 0; r < B * C; ++r) {
      drop[r] = null_ctx[r / C] ? 1.0 : 0.0;
      keep[r] = 1.0 - drop[r];
    }
    ctx_tok = nc::add(nc::mul(ctx_tok, row_scalars(keep, dm)),
                      nc::mul(nc::gather_rows(net.null_token.table, std::vector<std::size_t>(B * C, 0)), row_scalars(drop, dm)));
  }
  Tensor gap_tok = generative ? net.noisy_proj(*z_t)
                              : nc::gather_rows(net.mask_token.table, std::vector<std::size_t>(B * G, 0));

  // interleave to [b: ctx rows, gap rows] per window
  std::vector<std::size_t> order(B * L), positions(B * L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i) {
      order[b * L + i] = i < C ? b * C + i : B * C + b * G + (i - C);
      positions[b * L + i] = i;
    }
  Tensor x = nc::gather_rows(nc::concat_rows({ctx_tok, gap_tok}), order);
  x = nc::add(x, nc::gather_rows(net.pos.table, positions));
  x = nc::add(x, net.cov_proj(Tensor({B * L, c}, in.cov)));
  if (generative) {
    std::vector<double> feats(B * dm);
    for (std::size_t b = 0; b < B; ++b) {
      auto f = nc::sinusoidal_features(time[b], dm);
      std::copy(f.begin(), f.end(), feats.begin() + static_cast<std::ptrdiff_t>(b * dm));
    }
    Tensor temb = net.time_proj(Tensor({B, dm}, std::move(feats)));
    std::vector<std::size_t> batch_of_row(B * L);
    for (std::size_t r = 0; r < B * L; ++r) batch_of_row[r] = r / L;
    x = nc::add(x, nc::gather_rows(temb, batch_of_row));
  }
  Tensor h = net.backbone(x, L);
  std::vector<std::size_t> gap_rows;
  gap_rows.reserve(B * G);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t g = 0; g < G; ++g) gap_rows.push_back(b * L + C + g);
  return net.out(nc::gather_rows(h, gap_rows));
}

std::vector<double> bridge_predict(const BridgeNet& net, const BridgeInput& in) {
  if (net.mode != Mode::Deterministic) throw ConfigError("bridge_predict: network is not a deterministic bridge");
  nc::NoGradGuard ng;
  auto out = bridge_forward(net, in);
  return {out.values().begin(), out.values().end()};
}

}  // namespace splice::bridge
