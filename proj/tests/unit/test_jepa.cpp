#include <doctest.h>

#include <cmath>
#include <limits>

#include "splice/data/synth.hpp"
#include "splice/errors.hpp"
#include "splice/jepa/jepa.hpp"
#include "splice/numcore/gradcheck.hpp"

using namespace splice;
using namespace splice::jepa;

namespace {

JepaConfig tiny_config() {
  JepaConfig c;
  c.encoder_hidden = {16};
  c.repr_dim = 8;
  c.predictor = {8, 2, 1, 2};
  c.seq_len = 10;
  c.mask_max = 3;
  c.decoder_hidden = {16};
  return c;
}

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  nc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

nc::Tensor rand_tensor(nc::Shape s, std::uint64_t seed, bool rg = false) {
  const auto n = nc::shape_numel(s);
  return nc::Tensor(std::move(s), randn(n, seed), rg);
}

// Direct evaluation of cosine + lambda_v * variance hinge + lambda_c * off-diagonal covariance.
double oracle_loss(const std::vector<double>& pred, const std::vector<double>& tgt, std::size_t m,
                   const std::vector<double>& batch, std::size_t N, std::size_t p, const JepaLossWeights& w) {
  double cos_sum = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double d = 0, a = 0, b = 0;
    for (std::size_t j = 0; j < p; ++j) {
      d += pred[i * p + j] * tgt[i * p + j];
      a += pred[i * p + j] * pred[i * p + j];
      b += tgt[i * p + j] * tgt[i * p + j];
    }
    cos_sum += d / (std::sqrt(a) * std::sqrt(b) + 1e-8);
  }
  const double cosine = 1.0 - cos_sum / static_cast<double>(m);
  std::vector<double> mu(p, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < p; ++j) mu[j] += batch[i * p + j] / static_cast<double>(N);
  double var_term = 0, cov_term = 0;
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k < p; ++k) {
      double c = 0;
      for (std::size_t i = 0; i < N; ++i) c += (batch[i * p + j] - mu[j]) * (batch[i * p + k] - mu[k]);
      c /= static_cast<double>(N - 1);
      if (j == k)
        var_term += std::max(0.0, 1.0 - std::sqrt(c + w.var_eps));
      else
        cov_term += c * c;
    }
  cov_term /= static_cast<double>(p * p);
  return cosine + w.lambda_v * var_term + w.lambda_c * cov_term;
}

data::Series small_series() {
  auto cfg = data::synth_preset("stable-commercial");
  cfg.n_days = 520;
  auto s = data::build_series(data::synth_generate(cfg, 3));
  return data::zscore_apply(s, data::zscore_fit(s, 440));
}

}  // namespace

TEST_CASE("jepa loss equals a direct evaluation") {
  const std::size_t m = 5, N = 9, p = 6;
  const auto pred = randn(m * p, 1), tgt = randn(m * p, 2), batch = randn(N * p, 3);
  JepaLossWeights w;
  w.lambda_v = 0.3;
  w.lambda_c = 0.2;
  const auto parts = jepa_loss(nc::Tensor({m, p}, pred), nc::Tensor({m, p}, tgt), nc::Tensor({N, p}, batch), w);
  CHECK(parts.total.item() == doctest::Approx(oracle_loss(pred, tgt, m, batch, N, p, w)).epsilon(1e-10));
  CHECK(parts.total.item() ==
        doctest::Approx(parts.cosine + w.lambda_v * parts.variance + w.lambda_c * parts.covariance));
}

TEST_CASE("jepa loss gradients match finite differences") {
  auto pred = rand_tensor({4, 5}, 4, true);
  auto batch = rand_tensor({7, 5}, 5, true);
  const auto tgt = rand_tensor({4, 5}, 6);
  JepaLossWeights w{0.5, 0.1, 1e-4};
  nc::Params params{{"pred", pred}, {"batch", batch}};
  const auto r = nc::grad_check([&] { return jepa_loss(pred, tgt, batch, w).total; }, params);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("jepa loss rejects mismatched shapes") {
  CHECK_THROWS_AS(jepa_loss(rand_tensor({3, 4}, 1), rand_tensor({3, 5}, 2), rand_tensor({6, 4}, 3)), DimensionError);
  CHECK_THROWS_AS(jepa_loss(rand_tensor({3, 4}, 1), rand_tensor({3, 4}, 2), rand_tensor({1, 4}, 3)), DimensionError);
}

TEST_CASE("collapsed embeddings pay the full variance hinge") {
  const std::size_t p = 4;
  std::vector<double> same(6 * p, 0.5);
  const auto parts = jepa_loss(rand_tensor({2, p}, 1), rand_tensor({2, p}, 2), nc::Tensor({6, p}, same));
  CHECK(parts.variance == doctest::Approx(p * (1.0 - std::sqrt(1e-4))));
  CHECK(parts.covariance == doctest::Approx(0.0));
}

TEST_CASE("ema update is elementwise convex combination") {
  nc::Rng rng(1);
  JepaModel model(tiny_config(), rng);
  auto online = nc::parameters(model.encoder);
  auto target = nc::parameters(model.target);
  for (auto& [n, t] : online)
    for (auto& x : t.data()) x = 1.0;
  for (auto& [n, t] : target)
    for (auto& x : t.data()) x = 0.0;
  ema_update(target, online, 0.9);
  for (const auto& [n, t] : target)
    for (double x : t.values()) CHECK(x == doctest::Approx(0.1));
  auto wrong = nc::parameters(model.pred_out);
  CHECK_THROWS_AS(ema_update(wrong, online, 0.9), DimensionError);
}

TEST_CASE("encode rejects wrong widths and names the non-finite feature") {
  nc::Rng rng(2);
  const auto cfg = tiny_config();
  JepaModel model(cfg, rng);
  CHECK_THROWS_AS(encode(model, nc::Tensor::full({2, 10}, 0.0)), DimensionError);
  auto frames = randn(2 * cfg.input_dim(), 3);
  frames[cfg.input_dim() + 5 * cfg.n_features + data::kTemperature] = std::numeric_limits<double>::quiet_NaN();
  try {
    encode(model, nc::Tensor({2, cfg.input_dim()}, frames));
    FAIL("expected EncodingError");
  } catch (const EncodingError& e) {
    CHECK(std::string(e.what()).find("Temperature") != std::string::npos);
  }
  const auto z = encode(model, nc::Tensor({2, cfg.input_dim()}, randn(2 * cfg.input_dim(), 4)));
  CHECK(z.dim(1) == cfg.repr_dim);
}

TEST_CASE("masked prediction shape and error cases") {
  nc::Rng rng(3);
  const auto cfg = tiny_config();
  JepaModel model(cfg, rng);
  const std::size_t B = 2, L = cfg.seq_len;
  const auto ctx = rand_tensor({B * L, cfg.repr_dim}, 5);
  std::vector<std::uint8_t> mask(B * L, 0);
  mask[3] = mask[4] = 1;
  mask[L + 9] = 1;
  CHECK(predict_masked(model, ctx, mask, L).dim(0) == 3);

  std::vector<std::uint8_t> none(B * L, 0);
  none[2] = 1;
  CHECK_THROWS_AS(predict_masked(model, ctx, none, L), PredictionError);
  std::vector<std::uint8_t> all(B * L, 1);
  CHECK_THROWS_AS(predict_masked(model, ctx, all, L), PredictionError);
  CHECK_THROWS_AS(predict_masked(model, ctx, std::vector<std::uint8_t>(3, 1), L), DimensionError);
}

TEST_CASE("hidden day contents do not leak into predictions") {
  nc::Rng rng(4);
  const auto cfg = tiny_config();
  JepaModel model(cfg, rng);
  const std::size_t L = cfg.seq_len;
  auto a = randn(L * cfg.repr_dim, 6);
  auto b = a;
  std::vector<std::uint8_t> mask(L, 0);
  mask[4] = mask[5] = 1;
  for (std::size_t j = 0; j < cfg.repr_dim; ++j) b[4 * cfg.repr_dim + j] += 10.0;
  const auto pa = predict_masked(model, nc::Tensor({L, cfg.repr_dim}, a), mask, L);
  const auto pb = predict_masked(model, nc::Tensor({L, cfg.repr_dim}, b), mask, L);
  for (std::size_t i = 0; i < pa.numel(); ++i) CHECK(pa.values()[i] == doctest::Approx(pb.values()[i]).epsilon(1e-12));
}

TEST_CASE("gap rollout covers every gap day with finite embeddings") {
  nc::Rng rng(5);
  const auto cfg = tiny_config();
  JepaModel model(cfg, rng);
  const std::size_t n_ctx = 30, gap = 17;
  const auto out = rollout_gap(model, randn(n_ctx * cfg.repr_dim, 7), n_ctx, gap);
  REQUIRE(out.size() == gap * cfg.repr_dim);
  for (double x : out) CHECK(std::isfinite(x));
  CHECK_THROWS_AS(rollout_gap(model, randn(5, 1), n_ctx, gap), DimensionError);
}

TEST_CASE("short jepa training lowers the validation objective") {
  const auto s = small_series();
  nc::Rng rng(6);
  JepaModel model(tiny_config(), rng);
  JepaTrainConfig tc;
  tc.max_epochs = 6;
  tc.steps_per_epoch = 6;
  tc.batch_size = 8;
  tc.val_sequences = 8;
  const auto report = train_jepa(model, s, 440, tc);
  CHECK(report.log.size() >= 1);
  CHECK(report.final_val_loss <= report.initial_val_loss);
  CHECK(report.embedding_std.size() == 8);
  CHECK(report.collapse_warning == (report.mean_embedding_std < 0.1));
  const auto again = jepa_validation_loss(model, s, 440, s.n_days(), 8, 1);
  CHECK(again == doctest::Approx(jepa_validation_loss(model, s, 440, s.n_days(), 8, 1)));
}
