#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "splice/errors.hpp"
#include "splice/jepa/jepa.hpp"

namespace splice::jepa {

using nc::Tensor;

namespace {

struct MaskedBatch {
  Tensor frames;                    // [B*L, input_dim]
  std::vector<std::uint8_t> mask;  // B*L
  std::vector<std::size_t> hidden;  // rows with mask set
};

MaskedBatch sample_batch(const JepaModel& m, const data::Series& s, std::size_t begin, std::size_t end,
                         std::size_t batch, nc::Rng& rng) {
  const std::size_t L = m.cfg.seq_len;
  const std::size_t fs = s.frame_size();
  if (end < begin + L) throw ProtocolError("jepa: fewer than " + std::to_string(L) + " days available for sequences");
  MaskedBatch mb;
  std::vector<double> frames(batch * L * fs);
  mb.mask.assign(batch * L, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t start = rng.uniform_int(begin, end - L);
    auto src = std::span<const double>(s.values).subspan(start * fs, L * fs);
    std::copy(src.begin(), src.end(), frames.begin() + static_cast<std::ptrdiff_t>(b * L * fs));
    const std::size_t len = rng.uniform_int(m.cfg.mask_min, m.cfg.mask_max);
    const std::size_t off = rng.uniform_int(0, L - len);
    for (std::size_t i = off; i < off + len; ++i) mb.mask[b * L + i] = 1;
  }
  for (std::size_t r = 0; r < mb.mask.size(); ++r)
    if (mb.mask[r]) mb.hidden.push_back(r);
  mb.frames = Tensor({batch * L, fs}, std::move(frames));
  return mb;
}

JepaLossWeights weights_of(const JepaConfig& c) { return {c.lambda_v, c.lambda_c, c.var_eps}; }

JepaLossParts batch_loss(const JepaModel& m, const MaskedBatch& mb) {
  Tensor z = encode(m, mb.frames);
  Tensor pred = predict_masked(m, z, mb.mask, m.cfg.seq_len);
  Tensor target = encode_target(m, nc::gather_rows(mb.frames, mb.hidden));
  return jepa_loss(pred, target, z, weights_of(m.cfg));
}

std::vector<double> embedding_std(const JepaModel& m, const data::Series& s, std::size_t n) {
  auto z = encode_days(m, std::span<const double>(s.values).first(n * s.frame_size()), n);
  const std::size_t p = m.cfg.repr_dim;
  std::vector<double> mean(p, 0.0), var(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += z[i * p + j] / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) var[j] += std::pow(z[i * p + j] - mean[j], 2) / static_cast<double>(n - 1);
  for (auto& v : var) v = std::sqrt(v);
  return var;
}

}  // namespace

double jepa_validation_loss(const JepaModel& m, const data::Series& s, std::size_t begin, std::size_t end,
                            std::size_t n_sequences, std::uint64_t seed) {
  nc::NoGradGuard ng;
  nc::Rng rng(seed);
  double total = 0.0;
  std::size_t done = 0;
  while (done < n_sequences) {
    const std::size_t b = std::min<std::size_t>(16, n_sequences - done);
    auto mb = sample_batch(m, s, begin, end, b, rng);
    total += batch_loss(m, mb).total.item() * static_cast<double>(b);
    done += b;
  }
  return total / static_cast<double>(n_sequences);
}

JepaTrainReport train_jepa(JepaModel& m, const data::Series& s, std::size_t n_train, const JepaTrainConfig& cfg) {
  if (s.frame_size() != m.cfg.input_dim()) throw DimensionError("train_jepa: series feature count does not match model");
  if (n_train < m.cfg.seq_len || s.n_days() < n_train + m.cfg.seq_len)
    throw ProtocolError("train_jepa: need " + std::to_string(m.cfg.seq_len) + " days in both train and validation");
  nc::Rng rng(cfg.seed);
  auto online = nc::Params{};
  m.visit_online("", [&](const std::string& n, Tensor& t) { online.emplace_back(n, t); });
  auto enc = nc::parameters(m.encoder);
  auto tgt = nc::parameters(m.target);
  auto all = nc::parameters(m);
  nc::AdamState opt(online, {cfg.lr, cfg.weight_decay});
  nc::EarlyStopping stop(cfg.patience);
  const std::uint64_t val_seed = nc::Rng::mix(cfg.seed ^ 0x7661ULL);

  JepaTrainReport rep;
  rep.initial_val_loss = jepa_validation_loss(m, s, n_train, s.n_days(), cfg.val_sequences, val_seed);
  const std::size_t total_steps = cfg.max_epochs * cfg.steps_per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    JepaEpochLog log;
    log.epoch = epoch;
    for (std::size_t k = 0; k < cfg.steps_per_epoch; ++k, ++step) {
      auto mb = sample_batch(m, s, 0, n_train, cfg.batch_size, rng);
      auto parts = batch_loss(m, mb);
      if (!std::isfinite(parts.total.item())) throw TrainingError("jepa: non-finite loss at step " + std::to_string(step));
      nc::zero_grad(online);
      parts.total.backward();
      opt.config.lr = nc::cosine_lr(step, total_steps, cfg.lr, cfg.lr_min);
      nc::adam_step(online, opt);
      ema_update(tgt, enc, m.cfg.ema_decay);
      log.total += parts.total.item() / static_cast<double>(cfg.steps_per_epoch);
      log.cosine += parts.cosine / static_cast<double>(cfg.steps_per_epoch);
      log.variance += parts.variance / static_cast<double>(cfg.steps_per_epoch);
      log.covariance += parts.covariance / static_cast<double>(cfg.steps_per_epoch);
    }
    nc::zero_grad(online);
    log.val_loss = jepa_validation_loss(m, s, n_train, s.n_days(), cfg.val_sequences, val_seed);
    rep.log.push_back(log);
    if (stop.update(log.val_loss, all)) break;
  }
  stop.restore(all);
  rep.best_epoch = stop.best_epoch();
  rep.final_val_loss = jepa_validation_loss(m, s, n_train, s.n_days(), cfg.val_sequences, val_seed);
  rep.embedding_std = embedding_std(m, s, n_train);
  rep.mean_embedding_std = std::accumulate(rep.embedding_std.begin(), rep.embedding_std.end(), 0.0) /
                           static_cast<double>(rep.embedding_std.size());
  rep.collapse_warning = rep.mean_embedding_std < 0.1;
  return rep;
}

DailyDecoderReport train_daily_decoder(JepaModel& m, const data::Series& s, std::size_t n_train,
                                       const DecoderTrainConfig& cfg) {
  const std::size_t n = s.n_days();
  if (n_train == 0 || n_train >= n) throw ProtocolError("train_daily_decoder: need train and validation days");
  const std::size_t fs = s.frame_size();
  const std::size_t p = m.cfg.repr_dim;
  const auto z = encode_days(m, s.values, n);
  auto params = nc::parameters(m.daily_decoder);
  nc::AdamState opt(params, {cfg.lr, cfg.weight_decay});
  nc::EarlyStopping stop(cfg.patience);
  nc::Rng rng(cfg.seed);

  auto rows = [&](const std::vector<std::size_t>& days, bool frames) {
    const std::size_t w = frames ? fs : p;
    const auto& src = frames ? s.values : z;
    std::vector<double> out(days.size() * w);
    for (std::size_t i = 0; i < days.size(); ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(days[i] * w), w, out.begin() + static_cast<std::ptrdiff_t>(i * w));
    return Tensor({days.size(), w}, std::move(out));
  };
  std::vector<std::size_t> train_days(n_train), val_days(n - n_train);
  std::iota(train_days.begin(), train_days.end(), 0);
  std::iota(val_days.begin(), val_days.end(), n_train);
  const Tensor zval = rows(val_days, false), xval = rows(val_days, true);

  DailyDecoderReport rep;
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, n_train / cfg.batch_size);
  const std::size_t total = cfg.max_epochs * steps_per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_days.begin(), train_days.end(), rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++step) {
      std::vector<std::size_t> idx(train_days.begin() + static_cast<std::ptrdiff_t>(k * cfg.batch_size),
                                   train_days.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, (k + 1) * cfg.batch_size)));
      Tensor loss = nc::mse(daily_decode(m, rows(idx, false)), rows(idx, true));
      nc::zero_grad(params);
      loss.backward();
      opt.config.lr = nc::cosine_lr(step, total, cfg.lr, cfg.lr_min);
      nc::adam_step(params, opt);
      epoch_loss += loss.item() / static_cast<double>(steps_per_epoch);
    }
    double val;
    {
      nc::NoGradGuard ng;
      val = nc::mse(daily_decode(m, zval), xval).item();
    }
    rep.train_loss.push_back(epoch_loss);
    rep.val_loss.push_back(val);
    if (stop.update(val, params)) break;
  }
  stop.restore(params);
  nc::zero_grad(params);

  nc::NoGradGuard ng;
  const Tensor xtr = rows(train_days, true);
  rep.train_mse = nc::mse(daily_decode(m, rows(train_days, false)), xtr).item();
  std::vector<double> mean(fs, 0.0);
  for (std::size_t d = 0; d < n_train; ++d)
    for (std::size_t j = 0; j < fs; ++j) mean[j] += s.values[d * fs + j] / static_cast<double>(n_train);
  double acc = 0.0;
  for (std::size_t d = 0; d < n_train; ++d)
    for (std::size_t j = 0; j < fs; ++j) acc += std::pow(s.values[d * fs + j] - mean[j], 2);
  rep.mean_frame_mse = acc / static_cast<double>(n_train * fs);
  return rep;
}

void write_jepa_log_csv(const std::string& path, const JepaTrainReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "epoch,total,cosine,variance,covariance,val_loss\n";
  os.precision(10);
  for (const auto& e : r.log)
    os << e.epoch << ',' << e.total << ',' << e.cosine << ',' << e.variance << ',' << e.covariance << ',' << e.val_loss
       << '\n';
}

}  // namespace splice::jepa
