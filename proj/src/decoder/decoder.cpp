#include "splice/decoder/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splice/errors.hpp"
#include "splice/numcore/checkpoint.hpp"
#include "splice/numcore/optim.hpp"

namespace splice::decoder {

using nc::Tensor;

DecoderConfig DecoderConfig::enhanced() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::base() {
  DecoderConfig c;
  c.name = "base";
  c.proj_dim = 128;
  c.hidden = {128, 64};
  c.w_load = 1.0;
  c.noise_p = 0.0;
  return c;
}

HourlyDecoder::HourlyDecoder(const DecoderConfig& c, nc::Rng& rng) : cfg(c) {
  if (c.load_index >= c.n_features) throw ConfigError("decoder: Load index outside the feature range");
  proj = nc::Linear(c.repr_dim, c.proj_dim, rng);
  std::vector<std::size_t> dims{c.proj_dim + c.cond_dim()};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(c.n_features);
  mlp = nc::Mlp(dims, true, rng);
}

Tensor decode_hourly(const HourlyDecoder& dec, const Tensor& z, const Tensor& cond) {
  if (z.rank() != 2 || z.dim(1) != dec.cfg.repr_dim) throw DimensionError("decode_hourly: z must be [n, repr_dim]");
  const std::size_t n = z.dim(0);
  if (cond.rank() != 2 || cond.dim(1) != dec.cfg.cond_dim())
    throw DimensionError("decode_hourly: conditioning must have " + std::to_string(dec.cfg.cond_dim()) + " columns");
  if (cond.dim(0) != n * data::kHours)
    throw DimensionError("decode_hourly: expected " + std::to_string(data::kHours) + " conditioning rows per day, got " +
                         std::to_string(cond.dim(0)) + " for " + std::to_string(n) + " days");
  std::vector<std::size_t> day_of_row(n * data::kHours);
  for (std::size_t r = 0; r < day_of_row.size(); ++r) day_of_row[r] = r / data::kHours;
  Tensor h = nc::gelu(dec.proj(z));
  return dec.mlp(nc::concat_cols({nc::gather_rows(h, day_of_row), cond}));
}

Tensor load_weighted_mse(const Tensor& pred, const Tensor& target, double w_load, std::size_t load_index) {
  if (pred.shape() != target.shape() || pred.rank() != 2)
    throw DimensionError("load_weighted_mse: shapes " + nc::shape_str(pred.shape()) + " vs " +
                         nc::shape_str(target.shape()));
  const std::size_t d = pred.dim(1);
  if (load_index >= d) throw ConfigError("load_weighted_mse: Load index " + std::to_string(load_index) + " out of range");
  std::vector<double> w(d, 1.0);
  w[load_index] = w_load;
  const double norm = std::accumulate(w.begin(), w.end(), 0.0) * static_cast<double>(pred.dim(0));
  Tensor wt({d}, w);
  return nc::scale(nc::sum(nc::mul_row(nc::square(nc::sub(pred, target)), wt)), 1.0 / norm);
}

bool noise_augment(std::span<double> z, double sigma, double p, nc::Rng& rng) {
  if (sigma < 0) throw ConfigError("noise_augment: sigma must be non-negative");
  if (!rng.bernoulli(p)) return false;
  for (auto& x : z) x += sigma * rng.normal();
  return true;
}

std::vector<double> conditioning_rows(const data::Series& s, std::size_t begin, std::size_t end,
                                      const std::vector<std::size_t>& cols) {
  return s.columns(begin, end, cols);
}

DecoderTrainReport train_decoder(HourlyDecoder& dec, const jepa::JepaModel& jepa, const data::Series& s,
                                 std::size_t n_train, const DecoderTrainConfig& cfg) {
  const std::size_t n = s.n_days();
  if (n_train == 0 || n_train >= n) throw ProtocolError("train_decoder: need train and validation days");
  if (s.n_features != dec.cfg.n_features) throw DimensionError("train_decoder: series feature count differs from decoder");
  const std::size_t p = dec.cfg.repr_dim;
  const std::size_t d = s.n_features;
  const std::size_t c = dec.cfg.cond_dim();
  const auto z = jepa::encode_days(jepa, s.values, n);
  const auto cond = conditioning_rows(s, 0, n, dec.cfg.cond_columns);

  auto gather = [&](const std::vector<std::size_t>& days, const std::vector<double>& src, std::size_t per_day) {
    std::vector<double> out(days.size() * per_day);
    for (std::size_t i = 0; i < days.size(); ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(days[i] * per_day), per_day,
                  out.begin() + static_cast<std::ptrdiff_t>(i * per_day));
    return out;
  };
  auto batch = [&](const std::vector<std::size_t>& days) {
    return std::tuple{gather(days, z, p), Tensor({days.size() * data::kHours, c}, gather(days, cond, data::kHours * c)),
                      Tensor({days.size() * data::kHours, d}, gather(days, s.values, data::kHours * d))};
  };

  std::vector<std::size_t> train_days(n_train), val_days(n - n_train);
  std::iota(train_days.begin(), train_days.end(), 0);
  std::iota(val_days.begin(), val_days.end(), n_train);
  auto [zv, cv, xv] = batch(val_days);
  const Tensor zval({val_days.size(), p}, zv);

  auto params = nc::parameters(dec);
  nc::AdamState opt(params, {cfg.lr, cfg.weight_decay});
  nc::EarlyStopping stop(cfg.patience);
  nc::Rng rng(cfg.seed);
  DecoderTrainReport rep;
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, (n_train + cfg.batch_size - 1) / cfg.batch_size);
  const std::size_t total = cfg.max_epochs * steps_per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_days.begin(), train_days.end(), rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++step) {
      const std::size_t lo = k * cfg.batch_size, hi = std::min(n_train, lo + cfg.batch_size);
      std::vector<std::size_t> idx(train_days.begin() + static_cast<std::ptrdiff_t>(lo),
                                   train_days.begin() + static_cast<std::ptrdiff_t>(hi));
      auto [zb, cb, xb] = batch(idx);
      rep.augmented_batches += noise_augment(zb, dec.cfg.noise_sigma, dec.cfg.noise_p, rng);
      ++rep.batches;
      Tensor loss = load_weighted_mse(decode_hourly(dec, Tensor({idx.size(), p}, std::move(zb)), cb), xb,
                                      dec.cfg.w_load, dec.cfg.load_index);
      if (!std::isfinite(loss.item())) throw TrainingError("decoder: non-finite loss at step " + std::to_string(step));
      nc::zero_grad(params);
      loss.backward();
      opt.config.lr = nc::cosine_lr(step, total, cfg.lr, cfg.lr_min);
      nc::adam_step(params, opt);
      epoch_loss += loss.item() / static_cast<double>(steps_per_epoch);
    }
    double val;
    {
      nc::NoGradGuard ng;
      val = load_weighted_mse(decode_hourly(dec, zval, cv), xv, dec.cfg.w_load, dec.cfg.load_index).item();
    }
    rep.train_loss.push_back(epoch_loss);
    rep.val_loss.push_back(val);
    if (stop.update(val, params)) break;
  }
  stop.restore(params);
  nc::zero_grad(params);
  rep.best_epoch = stop.best_epoch();
  return rep;
}

namespace {

nc::Params with_schema(HourlyDecoder& dec) {
  auto params = nc::parameters(dec);
  std::vector<double> cols(dec.cfg.cond_columns.begin(), dec.cfg.cond_columns.end());
  params.emplace_back("meta.cond_columns", Tensor({cols.size()}, cols));
  params.emplace_back("meta.n_features", Tensor::scalar(static_cast<double>(dec.cfg.n_features)));
  return params;
}

}  // namespace

void save_decoder(const std::filesystem::path& path, HourlyDecoder& dec) { nc::save_checkpoint(path, with_schema(dec)); }

void load_decoder(const std::filesystem::path& path, HourlyDecoder& dec) {
  auto stored = nc::read_checkpoint(path);
  auto it = stored.find("meta.cond_columns");
  if (it == stored.end()) throw ConfigError("decoder checkpoint " + path.string() + " has no conditioning schema");
  std::vector<std::size_t> cols;
  for (double v : it->second.values()) cols.push_back(static_cast<std::size_t>(v));
  if (cols != dec.cfg.cond_columns)
    throw ConfigError("decoder checkpoint " + path.string() + " was trained with a different conditioning schema");
  auto params = with_schema(dec);
  nc::load_checkpoint(path, params);
}

}  // namespace splice::decoder
