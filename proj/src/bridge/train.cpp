#include <algorithm>
#include <cmath>

#include "splice/bridge/bridge.hpp"
#include "splice/errors.hpp"
#include "splice/numcore/optim.hpp"

namespace splice::bridge {

using nc::Tensor;

BridgeData make_bridge_data(const jepa::JepaModel& jepa, const data::Series& s, const std::vector<std::size_t>& cols) {
  BridgeData d;
  d.n_days = s.n_days();
  d.repr_dim = jepa.cfg.repr_dim;
  d.cov_dim = cols.size();
  d.emb = jepa::encode_days(jepa, s.values, s.n_days());
  d.cov.assign(d.n_days * d.cov_dim, 0.0);
  for (std::size_t day = 0; day < d.n_days; ++day)
    for (std::size_t h = 0; h < data::kHours; ++h)
      for (std::size_t j = 0; j < cols.size(); ++j)
        d.cov[day * d.cov_dim + j] += s.at(day, h, cols[j]) / static_cast<double>(data::kHours);
  return d;
}

BridgeInput window_input(const BridgeData& d, const std::vector<std::size_t>& starts, std::size_t C, std::size_t G) {
  BridgeInput in;
  in.batch = starts.size();
  in.ctx_len = C;
  in.gap_len = G;
  in.ctx.reserve(starts.size() * C * d.repr_dim);
  in.cov.reserve(starts.size() * (C + G) * d.cov_dim);
  for (auto s : starts) {
    if (s + C + G > d.n_days)
      throw ProtocolError("bridge window at day " + std::to_string(s) + " runs past the end of the series");
    in.ctx.insert(in.ctx.end(), d.emb.begin() + static_cast<std::ptrdiff_t>(s * d.repr_dim),
                  d.emb.begin() + static_cast<std::ptrdiff_t>((s + C) * d.repr_dim));
    in.cov.insert(in.cov.end(), d.cov.begin() + static_cast<std::ptrdiff_t>(s * d.cov_dim),
                  d.cov.begin() + static_cast<std::ptrdiff_t>((s + C + G) * d.cov_dim));
  }
  return in;
}

std::vector<double> window_targets(const BridgeData& d, const std::vector<std::size_t>& starts, std::size_t C,
                                   std::size_t G) {
  std::vector<double> out;
  out.reserve(starts.size() * G * d.repr_dim);
  for (auto s : starts)
    out.insert(out.end(), d.emb.begin() + static_cast<std::ptrdiff_t>((s + C) * d.repr_dim),
               d.emb.begin() + static_cast<std::ptrdiff_t>((s + C + G) * d.repr_dim));
  return out;
}

namespace {

Tensor objective(const BridgeNet& net, const BridgeInput& in, const std::vector<double>& z0, const DiffusionSchedule& sched,
                 nc::Rng& rng, double p_uncond, double gamma) {
  switch (net.mode) {
    case Mode::Deterministic:
      return nc::mse(bridge_forward(net, in), Tensor({in.batch * in.gap_len, net.cfg.repr_dim}, z0));
    case Mode::Diffusion: return diffusion_loss(net, in, z0, sched, rng, p_uncond, gamma);
    case Mode::FlowMatching: return fm_loss(net, in, z0, rng, p_uncond);
  }
  throw ConfigError("bridge: unknown mode");
}

}  // namespace

double bridge_validation_loss(const BridgeNet& net, const BridgeData& d, const std::vector<std::size_t>& starts,
                              const BridgeTrainConfig& cfg, const DiffusionSchedule& sched, std::uint64_t seed) {
  if (starts.empty()) throw ProtocolError("bridge: no validation windows");
  nc::NoGradGuard ng;
  nc::Rng rng(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < starts.size(); i += cfg.batch_size) {
    std::vector<std::size_t> chunk(starts.begin() + static_cast<std::ptrdiff_t>(i),
                                   starts.begin() + static_cast<std::ptrdiff_t>(std::min(starts.size(), i + cfg.batch_size)));
    const auto in = window_input(d, chunk, cfg.ctx_len, cfg.gap_len);
    const auto z0 = window_targets(d, chunk, cfg.ctx_len, cfg.gap_len);
    total += objective(net, in, z0, sched, rng, 0.0, cfg.minsnr_gamma).item() * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(starts.size());
}

BridgeTrainReport train_bridge(BridgeNet& net, const BridgeData& d, const std::vector<std::size_t>& train_starts,
                               const std::vector<std::size_t>& val_starts, const BridgeTrainConfig& cfg,
                               const DiffusionSchedule& sched) {
  if (train_starts.empty()) throw ProtocolError("bridge: no training windows");
  if (d.cov_dim != net.cfg.cov_dim || d.repr_dim != net.cfg.repr_dim)
    throw DimensionError("bridge: data dimensions do not match the network");
  auto params = nc::parameters(net);
  nc::AdamState opt(params, {cfg.lr, cfg.weight_decay});
  nc::EarlyStopping stop(cfg.patience);
  nc::Rng rng(cfg.seed);
  const std::uint64_t val_seed = nc::Rng::mix(cfg.seed ^ 0x6272ULL);
  BridgeTrainReport rep;
  rep.initial_val_loss = bridge_validation_loss(net, d, val_starts, cfg, sched, val_seed);
  const std::size_t total = cfg.max_epochs * cfg.steps_per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < cfg.steps_per_epoch; ++k, ++step) {
      std::vector<std::size_t> starts(cfg.batch_size);
      for (auto& s : starts) s = train_starts[rng.uniform_int(0, train_starts.size() - 1)];
      const auto in = window_input(d, starts, cfg.ctx_len, cfg.gap_len);
      const auto z0 = window_targets(d, starts, cfg.ctx_len, cfg.gap_len);
      Tensor loss = objective(net, in, z0, sched, rng, cfg.p_uncond, cfg.minsnr_gamma);
      if (!std::isfinite(loss.item()))
        throw TrainingError("bridge (" + mode_name(net.mode) + "): loss diverged at step " + std::to_string(step));
      nc::zero_grad(params);
      loss.backward();
      opt.config.lr = nc::cosine_lr(step, total, cfg.lr, cfg.lr_min);
      nc::adam_step(params, opt);
      epoch_loss += loss.item() / static_cast<double>(cfg.steps_per_epoch);
    }
    const double val = bridge_validation_loss(net, d, val_starts, cfg, sched, val_seed);
    if (!std::isfinite(val)) throw TrainingError("bridge (" + mode_name(net.mode) + "): validation loss is not finite");
    rep.train_loss.push_back(epoch_loss);
    rep.val_loss.push_back(val);
    if (stop.update(val, params)) break;
  }
  stop.restore(params);
  nc::zero_grad(params);
  rep.best_epoch = stop.best_epoch();
  return rep;
}

}  // namespace splice::bridge
