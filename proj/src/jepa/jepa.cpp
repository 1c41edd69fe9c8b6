#include "splice/jepa/jepa.hpp"

#include <cmath>

#include "splice/errors.hpp"

namespace splice::jepa {

using nc::Tensor;

JepaModel::JepaModel(const JepaConfig& c, nc::Rng& rng) : cfg(c) {
  if (c.mask_min < 1 || c.mask_max < c.mask_min || c.mask_max >= c.seq_len)
    throw ConfigError("jepa: mask block must satisfy 1 <= min <= max < seq_len");
  if (!(c.ema_decay > 0 && c.ema_decay < 1)) throw ConfigError("jepa: EMA decay must be in (0,1)");
  std::vector<std::size_t> enc{c.input_dim()};
  enc.insert(enc.end(), c.encoder_hidden.begin(), c.encoder_hidden.end());
  enc.push_back(c.repr_dim);
  encoder = nc::Mlp(enc, false, rng);
  target = nc::deep_copy(encoder);
  target.visit("", [](const std::string&, Tensor& t) { t.set_requires_grad(false); });
  const std::size_t dm = c.predictor.d_model;
  pred_in = nc::Linear(c.repr_dim, dm, rng);
  pos = nc::Embedding(c.seq_len, dm, 0.02, rng);
  mask_token = nc::Embedding(1, dm, 0.02, rng);
  predictor = nc::Transformer(c.predictor, rng);
  pred_out = nc::Linear(dm, c.repr_dim, rng);
  std::vector<std::size_t> dec{c.repr_dim};
  dec.insert(dec.end(), c.decoder_hidden.begin(), c.decoder_hidden.end());
  dec.push_back(c.input_dim());
  daily_decoder = nc::Mlp(dec, false, rng);
}

namespace {

void check_frames(const JepaModel& m, const Tensor& frames) {
  if (frames.rank() != 2 || frames.dim(1) != m.cfg.input_dim())
    throw DimensionError("encode: frames must be [n, " + std::to_string(m.cfg.input_dim()) + "], got " +
                         nc::shape_str(frames.shape()));
  auto v = frames.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) {
      const std::size_t f = (i % m.cfg.input_dim()) % m.cfg.n_features;
      const std::string name = m.cfg.n_features == data::kNumFeatures ? data::feature_names()[f] : std::to_string(f);
      throw EncodingError("encode: non-finite value in feature '" + name + "' (day row " +
                          std::to_string(i / m.cfg.input_dim()) + ", hour " +
                          std::to_string((i % m.cfg.input_dim()) / m.cfg.n_features) + ")");
    }
}

}  // namespace

Tensor encode(const JepaModel& m, const Tensor& frames) {
  check_frames(m, frames);
  return m.encoder(frames);
}

Tensor encode_target(const JepaModel& m, const Tensor& frames) {
  check_frames(m, frames);
  nc::NoGradGuard ng;
  return m.target(frames);
}

std::vector<double> encode_days(const JepaModel& m, std::span<const double> frames, std::size_t n) {
  nc::NoGradGuard ng;
  Tensor x({n, m.cfg.input_dim()}, std::vector<double>(frames.begin(), frames.end()));
  auto z = encode(m, x);
  return {z.values().begin(), z.values().end()};
}

Tensor predict_masked(const JepaModel& m, const Tensor& ctx, const std::vector<std::uint8_t>& mask,
                      std::size_t L) {
  if (L == 0 || L > m.cfg.seq_len) throw DimensionError("predict_masked: sequence longer than positional table");
  if (ctx.rank() != 2 || ctx.dim(1) != m.cfg.repr_dim || ctx.dim(0) % L != 0 || mask.size() != ctx.dim(0))
    throw DimensionError("predict_masked: context " + nc::shape_str(ctx.shape()) + " and mask of " +
                         std::to_string(mask.size()) + " do not form [B*" + std::to_string(L) + ", " +
                         std::to_string(m.cfg.repr_dim) + "]");
  const std::size_t B = ctx.dim(0) / L;
  std::vector<std::size_t> hidden, zero_idx(ctx.dim(0), 0), positions(ctx.dim(0));
  std::vector<double> keep(ctx.dim(0)), hide(ctx.dim(0));
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t n_hidden = 0;
    for (std::size_t i = 0; i < L; ++i) n_hidden += mask[b * L + i] != 0;
    if (n_hidden == 0) throw PredictionError("predict_masked: sequence " + std::to_string(b) + " has no masked day");
    if (n_hidden == L) throw PredictionError("predict_masked: sequence " + std::to_string(b) + " is fully masked");
  }
  for (std::size_t r = 0; r < ctx.dim(0); ++r) {
    positions[r] = r % L;
    if (mask[r]) hidden.push_back(r);
    keep[r] = mask[r] ? 0.0 : 1.0;
    hide[r] = mask[r] ? 1.0 : 0.0;
  }
  const std::size_t dm = m.cfg.predictor.d_model;
  auto col = [&](const std::vector<double>& v) {
    std::vector<double> full(v.size() * dm);
    for (std::size_t r = 0; r < v.size(); ++r) std::fill_n(full.begin() + r * dm, dm, v[r]);
    return Tensor({v.size(), dm}, std::move(full));
  };
  Tensor x = nc::add(nc::mul(m.pred_in(ctx), col(keep)), nc::mul(nc::gather_rows(m.mask_token.table, zero_idx), col(hide)));
  x = nc::add(x, nc::gather_rows(m.pos.table, positions));
  nc::AttentionMask am(B * L * L, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) am[(b * L + i) * L + j] = mask[b * L + j];
  Tensor h = m.predictor(x, L, &am);
  return m.pred_out(nc::gather_rows(h, hidden));
}

JepaLossParts jepa_loss(const Tensor& pred, const Tensor& target, const Tensor& batch, const JepaLossWeights& w) {
  if (pred.shape() != target.shape() || pred.rank() != 2)
    throw DimensionError("jepa_loss: prediction " + nc::shape_str(pred.shape()) + " vs target " +
                         nc::shape_str(target.shape()));
  if (batch.rank() != 2 || batch.dim(0) < 2 || batch.dim(1) != pred.dim(1))
    throw DimensionError("jepa_loss: batch embeddings must be [N>=2, p]");
  const double N = static_cast<double>(batch.dim(0));
  const double p = static_cast<double>(batch.dim(1));

  Tensor dot = nc::sum_axis1(nc::mul(pred, target));
  Tensor norms = nc::mul(nc::sqrt(nc::sum_axis1(nc::square(pred))), nc::sqrt(nc::sum_axis1(nc::square(target))));
  Tensor cosine = nc::add_scalar(nc::scale(nc::mean(nc::div(dot, nc::add_scalar(norms, 1e-8))), -1.0), 1.0);

  Tensor centred = nc::add_row(batch, nc::scale(nc::mean_axis0(batch), -1.0));
  Tensor var = nc::scale(nc::sum_axis0(nc::square(centred)), 1.0 / (N - 1.0));
  Tensor std = nc::sqrt(nc::add_scalar(var, w.var_eps));
  Tensor variance = nc::sum(nc::relu(nc::add_scalar(nc::scale(std, -1.0), 1.0)));

  Tensor cov = nc::scale(nc::matmul(nc::transpose(centred), centred), 1.0 / (N - 1.0));
  // off-diagonal energy = total - diagonal
  Tensor covariance = nc::scale(nc::sub(nc::sum(nc::square(cov)), nc::sum(nc::square(var))), 1.0 / (p * p));

  JepaLossParts parts;
  parts.total = nc::add(nc::add(cosine, nc::scale(variance, w.lambda_v)), nc::scale(covariance, w.lambda_c));
  parts.cosine = cosine.item();
  parts.variance = variance.item();
  parts.covariance = covariance.item();
  return parts;
}

void ema_update(nc::Params& target, const nc::Params& online, double decay) {
  if (target.size() != online.size()) throw DimensionError("ema_update: parameter lists differ");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target[i].second.data();
    auto o = online[i].second.values();
    if (t.size() != o.size()) throw DimensionError("ema_update: shape mismatch at " + target[i].first);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = decay * t[k] + (1.0 - decay) * o[k];
  }
}

Tensor daily_decode(const JepaModel& m, const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != m.cfg.repr_dim) throw DimensionError("daily_decode: z must be [n, repr_dim]");
  return m.daily_decoder(z);
}

std::vector<double> rollout_gap(const JepaModel& m, std::span<const double> context, std::size_t n_ctx,
                                std::size_t gap_len) {
  const std::size_t p = m.cfg.repr_dim;
  const std::size_t L = m.cfg.seq_len;
  const std::size_t block = m.cfg.mask_max;
  const std::size_t keep = L - block;
  if (context.size() != n_ctx * p) throw DimensionError("rollout_gap: context is not [n_ctx, repr_dim]");
  if (n_ctx < keep) throw ProtocolError("rollout_gap: need at least " + std::to_string(keep) + " context days");
  nc::NoGradGuard ng;
  std::vector<double> history(context.end() - static_cast<std::ptrdiff_t>(keep * p), context.end());
  std::vector<double> out;
  out.reserve(gap_len * p);
  while (out.size() < gap_len * p) {
    std::vector<double> seq(history.end() - static_cast<std::ptrdiff_t>(keep * p), history.end());
    seq.resize(L * p, 0.0);
    std::vector<std::uint8_t> mask(L, 0);
    for (std::size_t i = keep; i < L; ++i) mask[i] = 1;
    Tensor pred = predict_masked(m, Tensor({L, p}, std::move(seq)), mask, L);
    const std::size_t take = std::min(block, gap_len - out.size() / p);
    auto v = pred.values();
    out.insert(out.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(take * p));
    history.insert(history.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(take * p));
  }
  return out;
}

}  // namespace splice::jepa
