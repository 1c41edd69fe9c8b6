#include <doctest.h>

#include <cmath>
#include <sstream>

#include "splice/conformal/conformal.hpp"
#include "splice/errors.hpp"
#include "splice/numcore/rng.hpp"

using namespace splice;
using namespace splice::conformal;

TEST_CASE("empirical quantile interpolates order statistics") {
  CHECK(empirical_quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(empirical_quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(empirical_quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(empirical_quantile({0, 10}, 0.25) == doctest::Approx(2.5));
  CHECK_THROWS_AS(empirical_quantile({}, 0.5), CalibrationError);
}

TEST_CASE("ensemble band per hour") {
  // three samples over two hours
  const std::vector<double> s{0, 10, 1, 20, 2, 30};
  const auto b = ensemble_quantiles(s, 3, 0.5);
  CHECK(b.lo[0] == doctest::Approx(0.5));
  CHECK(b.hi[0] == doctest::Approx(1.5));
  CHECK(b.lo[1] == doctest::Approx(15));
  CHECK_THROWS_AS(ensemble_quantiles(s, 1, 0.1), CalibrationError);
  CHECK_THROWS_AS(ensemble_quantiles(s, 4, 0.1), DimensionError);
}

TEST_CASE("nonconformity signs") {
  CHECK(nonconformity(0, 1, 0.5) == doctest::Approx(-0.5));
  CHECK(nonconformity(0, 1, 1.5) == doctest::Approx(0.5));
  CHECK(nonconformity(0, 1, -2) == doctest::Approx(2));
  CHECK(nonconformity(0, 1, 0.5, true) == 0.0);
}

TEST_CASE("split-conformal rank and infinite quantile") {
  CHECK(cqr_rank(19, 0.05) == 19);
  CHECK(cqr_rank(99, 0.1) == 90);
  CHECK(cqr_rank(10, 0.05) == 11);
  CalibrationScores few(std::vector<double>{3, 1, 2});
  CHECK(std::isinf(cqr_quantile(few, 0.05)));
  const auto band = cqr_band(EnsembleBand{{0.0}, {1.0}}, cqr_quantile(few, 0.05));
  CHECK(band.unbounded);
  CalibrationScores many;
  std::vector<double> v(99);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(99 - i);
  many.add(v);
  CHECK(cqr_quantile(many, 0.1) == 90.0);
  CHECK_THROWS_AS(CalibrationScores(std::vector<double>{1.0, NAN}), CalibrationError);
  CHECK_THROWS_AS(cqr_quantile(CalibrationScores{}, 0.1), CalibrationError);
}

TEST_CASE("split-conformal coverage holds on exchangeable scores") {
  nc::Rng rng(11);
  const double alpha = 0.1;
  std::size_t covered = 0, trials = 4000;
  for (std::size_t k = 0; k < trials; ++k) {
    std::vector<double> cal(49);
    for (auto& x : cal) x = rng.normal();
    const double q = cqr_quantile(CalibrationScores(cal), alpha);
    covered += rng.normal() <= q;
  }
  // exact marginal coverage is ceil(50 * 0.9) / 50 = 0.9
  CHECK(static_cast<double>(covered) / static_cast<double>(trials) == doctest::Approx(0.9).epsilon(0.02));
}

TEST_CASE("ACI update rule and clamping") {
  auto s = aci_init(0.05, 0.01);
  aci_update(s, 1);
  CHECK(s.alpha_t == doctest::Approx(0.05 + 0.01 * (0.05 - 1)));
  aci_update(s, 0);
  CHECK(s.alpha_t == doctest::Approx(0.0405 + 0.0005));
  CHECK(s.alpha_trace.size() == 3);
  auto c = aci_init(0.05, 0.5);
  aci_update(c, 1);
  CHECK(c.alpha_t == 0.001);
  CHECK(c.clamp_events == 1);
  CHECK_THROWS_AS(aci_init(0.0), ConfigError);
  CHECK_THROWS_AS(aci_init(0.05, 0.0), ConfigError);
}

TEST_CASE("telescoping identity holds on every unclamped error sequence") {
  nc::Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = 0.05 + 0.4 * rng.uniform();
    auto s = aci_init(alpha, 0.001, 1e-9, 1 - 1e-9);
    const std::size_t T = 50 + rng.uniform_int(0, 400);
    for (std::size_t t = 0; t < T; ++t) aci_update(s, rng.uniform() < alpha ? 1 : 0);
    const auto r = coverage_bound_check(s.err, s.alpha_trace, s.gamma, s.clamp_lo, alpha);
    if (r.clamped) continue;
    CHECK(r.identity_residual < 1e-12);
    CHECK(r.identity_holds);
  }
}

TEST_CASE("coverage bound holds when the iterate stays inside the clamp range") {
  nc::Rng rng(13);
  // A sampler with heavy-tailed truth exercising both error types.
  AciConfig cfg;
  cfg.alpha = 0.1;
  cfg.gamma = 0.01;
  cfg.s_cal = 30;
  cfg.s_inf = 20;
  const WindowSampler sampler = [&](std::size_t w, std::size_t n) {
    nc::Rng r(1000 + w);
    ConformalWindow win;
    win.n_samples = n;
    const std::size_t H = 48;
    for (std::size_t s = 0; s < n * H; ++s) win.samples.push_back(r.normal());
    for (std::size_t h = 0; h < H; ++h) win.truth.push_back((w % 3 == 0 ? 2.0 : 1.0) * r.normal());
    return win;
  };
  const auto rep = aci_run(sampler, 20, cfg);
  CHECK(rep.n_cal_windows == 10);
  CHECK(rep.trace.size() == 10 * 48);
  CHECK(rep.window_coverage.size() == 10);
  CHECK(rep.bound.T == rep.trace.size());
  CHECK_FALSE(rep.bound.clamped);
  CHECK(rep.bound.identity_holds);
  CHECK(rep.bound.within_bound);
  CHECK(std::abs(rep.aci_coverage - 0.9) <= rep.bound.bound + 1e-12);
  CHECK(rep.alpha_T == rep.trace.back().alpha_t + cfg.gamma * (cfg.alpha - rep.trace.back().err));
  std::ostringstream os;
  write_trace_csv(os, rep.trace);
  CHECK(os.str().rfind("t,window,alpha_t,lo,hi,y,err\n", 0) == 0);
  CHECK(summary_json(rep, cfg).find("\"alpha_T\"") != std::string::npos);
}

TEST_CASE("aci_run validates its inputs") {
  AciConfig cfg;
  const WindowSampler ok = [](std::size_t, std::size_t n) {
    ConformalWindow w;
    w.n_samples = n;
    w.samples.assign(n * 2, 0.0);
    w.truth = {0.0, 0.0};
    return w;
  };
  CHECK_THROWS_AS(aci_run(ok, 2, cfg), ProtocolError);
  cfg.cal_fraction = 1.0;
  CHECK_THROWS_AS(aci_run(ok, 10, cfg), ConfigError);
  cfg.cal_fraction = 0.5;
  const WindowSampler bad = [](std::size_t, std::size_t n) {
    ConformalWindow w;
    w.n_samples = n;
    w.samples.assign(3, 0.0);
    w.truth = {0.0};
    return w;
  };
  CHECK_THROWS_AS(aci_run(bad, 10, cfg), DimensionError);
}

TEST_CASE("symmetric bands are centred on the ensemble median") {
  AciConfig cfg;
  cfg.symmetric = true;
  cfg.alpha = 0.2;
  const WindowSampler sampler = [](std::size_t w, std::size_t n) {
    nc::Rng r(w + 1);
    ConformalWindow win;
    win.n_samples = n;
    for (std::size_t s = 0; s < n * 10; ++s) win.samples.push_back(r.normal());
    for (std::size_t h = 0; h < 10; ++h) win.truth.push_back(r.normal());
    return win;
  };
  const auto rep = aci_run(sampler, 10, cfg);
  for (const auto& s : rep.trace) CHECK(s.hi - s.lo >= 0.0);
  CHECK(rep.q_static >= 0.0);
}
