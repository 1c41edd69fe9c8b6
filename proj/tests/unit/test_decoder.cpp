#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "splice/data/synth.hpp"
#include "splice/decoder/decoder.hpp"
#include "splice/errors.hpp"
#include "splice/numcore/gradcheck.hpp"

using namespace splice;
using namespace splice::decoder;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  nc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

DecoderConfig tiny_config() {
  auto c = DecoderConfig::enhanced();
  c.repr_dim = 4;
  c.proj_dim = 8;
  c.hidden = {8};
  return c;
}

}  // namespace

TEST_CASE("preset decoder layouts") {
  nc::Rng rng(1);
  const HourlyDecoder enh(DecoderConfig::enhanced(), rng);
  CHECK(enh.proj.out_features() == 256);
  CHECK(enh.mlp.layers.front().in_features() == 256 + 10);
  CHECK(enh.mlp.layers.back().out_features() == data::kNumFeatures);
  const auto base = DecoderConfig::base();
  CHECK(base.w_load == 1.0);
  CHECK(base.noise_p == 0.0);
  const HourlyDecoder b(base, rng);
  CHECK(b.proj.out_features() == 128);
  CHECK(b.mlp.layers.size() == 3);
}

TEST_CASE("decode_hourly shape and per-row independence") {
  nc::Rng rng(2);
  const HourlyDecoder dec(tiny_config(), rng);
  const std::size_t n = 3, c = dec.cfg.cond_dim();
  auto z = randn(n * 4, 3);
  auto cond = randn(n * 24 * c, 4);
  const auto out = decode_hourly(dec, nc::Tensor({n, 4}, z), nc::Tensor({n * 24, c}, cond));
  CHECK(out.shape() == nc::Shape{n * 24, data::kNumFeatures});

  // Perturbing day 1 and hour (2, 5) conditioning changes only those rows.
  auto z2 = z;
  z2[4] += 1.0;
  auto cond2 = cond;
  cond2[(2 * 24 + 5) * c] += 1.0;
  const auto out2 = decode_hourly(dec, nc::Tensor({n, 4}, z2), nc::Tensor({n * 24, c}, cond2));
  for (std::size_t r = 0; r < n * 24; ++r) {
    const bool touched = r / 24 == 1 || r == 2 * 24 + 5;
    double diff = 0;
    for (std::size_t f = 0; f < data::kNumFeatures; ++f)
      diff = std::max(diff, std::abs(out.at(r, f) - out2.at(r, f)));
    INFO("row ", r);
    CHECK((diff > 0) == touched);
  }
  CHECK_THROWS_AS(decode_hourly(dec, nc::Tensor({n, 5}, randn(n * 5, 1)), nc::Tensor({n * 24, c}, cond)),
                  DimensionError);
  CHECK_THROWS_AS(decode_hourly(dec, nc::Tensor({n, 4}, z), nc::Tensor({n * 23, c}, randn(n * 23 * c, 1))),
                  DimensionError);
}

TEST_CASE("load-weighted MSE equals a direct evaluation") {
  const std::size_t rows = 5, d = 4;
  const auto p = randn(rows * d, 5), t = randn(rows * d, 6);
  double num = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < d; ++f) {
      const double e = p[r * d + f] - t[r * d + f];
      num += (f == 2 ? 5.0 : 1.0) * e * e;
    }
  const double expected = num / (static_cast<double>(rows) * (5.0 + 3.0));
  CHECK(load_weighted_mse(nc::Tensor({rows, d}, p), nc::Tensor({rows, d}, t), 5.0, 2).item() ==
        doctest::Approx(expected));
  CHECK(load_weighted_mse(nc::Tensor({rows, d}, p), nc::Tensor({rows, d}, t), 1.0, 0).item() ==
        doctest::Approx(nc::mse(nc::Tensor({rows, d}, p), nc::Tensor({rows, d}, t)).item()));
  CHECK_THROWS_AS(load_weighted_mse(nc::Tensor({rows, d}, p), nc::Tensor({rows, d}, t), 5.0, 9), ConfigError);
}

TEST_CASE("decoder gradients match finite differences") {
  nc::Rng rng(3);
  HourlyDecoder dec(tiny_config(), rng);
  const std::size_t c = dec.cfg.cond_dim();
  const nc::Tensor z({2, 4}, randn(8, 7)), cond({48, c}, randn(48 * c, 8));
  const nc::Tensor target({48, data::kNumFeatures}, randn(48 * data::kNumFeatures, 9));
  auto params = nc::parameters(dec);
  const auto r = nc::grad_check([&] { return load_weighted_mse(decode_hourly(dec, z, cond), target, 5.0, 0); }, params);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("noise augmentation fires with the configured probability") {
  nc::Rng rng(4);
  std::size_t fired = 0;
  double ss = 0;
  std::size_t count = 0;
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> z(16, 0.0);
    if (noise_augment(z, 0.15, 0.5, rng)) {
      ++fired;
      for (double x : z) {
        ss += x * x;
        ++count;
      }
    } else {
      for (double x : z) CHECK(x == 0.0);
    }
  }
  CHECK(static_cast<double>(fired) / 2000.0 == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::sqrt(ss / static_cast<double>(count)) == doctest::Approx(0.15).epsilon(0.05));
  std::vector<double> z(4, 0.0);
  CHECK_FALSE(noise_augment(z, 0.15, 0.0, rng));
  CHECK_THROWS_AS(noise_augment(z, -1.0, 0.5, rng), ConfigError);
}

TEST_CASE("checkpoint records the conditioning schema") {
  const auto dir = std::filesystem::temp_directory_path() / "splice_decoder_test";
  std::filesystem::create_directories(dir);
  nc::Rng rng(5);
  HourlyDecoder dec(tiny_config(), rng);
  save_decoder(dir / "dec.ckpt", dec);

  nc::Rng rng2(6);
  HourlyDecoder same(tiny_config(), rng2);
  load_decoder(dir / "dec.ckpt", same);
  CHECK(nc::checksum(nc::parameters(same)) == nc::checksum(nc::parameters(dec)));

  auto other_cfg = tiny_config();
  std::swap(other_cfg.cond_columns[0], other_cfg.cond_columns[1]);
  HourlyDecoder other(other_cfg, rng2);
  CHECK_THROWS_AS(load_decoder(dir / "dec.ckpt", other), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("conditioning rows select the configured columns") {
  auto cfg = data::synth_preset("periodic");
  const auto s = data::build_series(data::synth_generate(cfg, 1));
  const auto& cols = data::conditioning_columns();
  const auto rows = conditioning_rows(s, 3, 5, cols);
  REQUIRE(rows.size() == 2 * 24 * cols.size());
  CHECK(rows[(24 + 7) * cols.size() + 1] == s.at(4, 7, cols[1]));
}
