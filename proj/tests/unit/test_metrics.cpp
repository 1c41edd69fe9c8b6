#include <doctest.h>

#include <cmath>

#include "splice/errors.hpp"
#include "splice/metrics/metrics.hpp"
#include "splice/numcore/rng.hpp"

using namespace splice;
using namespace splice::metrics;

namespace {

// Brute-force one-sided p-value over all 2^n sign assignments.
double enumerate_p(const std::vector<double>& a, const std::vector<double>& b, Tail tail) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, eq = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++less;
      if (std::abs(d[j]) == std::abs(d[i])) ++eq;
    }
    rank[i] = less + (eq + 1) / 2.0;
  }
  double w = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) w += rank[i];
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += rank[i];
    if (tail == Tail::Less ? s <= w + 1e-9 : s >= w - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

}  // namespace

TEST_CASE("all-feature MSE and min-max load MSE") {
  CHECK(gap_mse_allfeat(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 5}) == doctest::Approx(4.0 / 3.0));
  CHECK_THROWS_AS(gap_mse_allfeat(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
  const auto l = load_mse_minmax(std::vector<double>{0, 5, 10}, std::vector<double>{0, 5, 10});
  CHECK(l.mse == 0.0);
  CHECK(l.range == 10.0);
  const auto s = load_mse_minmax(std::vector<double>{2, 5, 10}, std::vector<double>{0, 5, 10});
  CHECK(s.mse == doctest::Approx(0.04 / 3.0));
  CHECK(load_mse_minmax(std::vector<double>{1, 2}, std::vector<double>{3, 3}).degenerate);
}

TEST_CASE("MAPE skips zero-load hours") {
  const auto m = mape(std::vector<double>{1, 110, 90}, std::vector<double>{0, 100, 100});
  CHECK(m.excluded == 1);
  CHECK(m.used == 2);
  CHECK(m.pct == doctest::Approx(10.0));
  CHECK(std::isnan(mape(std::vector<double>{1}, std::vector<double>{0}).pct));
}

TEST_CASE("physical-unit conversions") {
  CHECK(rmse_physical(0.04, 50.0) == doctest::Approx(10.0));
  CHECK(mae_from_rmse(10.0) == doctest::Approx(10.0 * std::sqrt(2.0 / M_PI)));
}

TEST_CASE("energy CRPS matches the exact integral") {
  nc::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(0, 30);
    std::vector<double> x(m);
    for (auto& v : x) v = rng.normal();
    if (trial % 7 == 0) x[0] = x[m - 1];  // ties
    const double y = trial % 5 == 0 ? x[0] : 2 * rng.normal();
    CHECK(crps_energy(x, y) == doctest::Approx(crps_integral_oracle(x, y)).epsilon(1e-10));
  }
}

TEST_CASE("single-member CRPS reduces to absolute error") {
  CHECK(crps_energy(std::vector<double>{3.0}, 1.0) == doctest::Approx(2.0));
  const std::vector<double> pred{1, 2, 3}, truth{2, 2, 5};
  CHECK(crps_ensemble_mean(pred, 1, truth) == doctest::Approx(1.0));
  CHECK_THROWS_AS(crps_ensemble_mean(pred, 2, truth), DimensionError);
  CHECK_THROWS_AS(crps_energy(std::vector<double>{}, 1.0), DimensionError);
}

TEST_CASE("ensemble spread lowers CRPS on a noisy target") {
  nc::Rng rng(4);
  double point = 0, ens = 0;
  for (int t = 0; t < 2000; ++t) {
    const double y = rng.normal();
    std::vector<double> e(20);
    for (auto& v : e) v = rng.normal();
    point += crps_energy(std::vector<double>{0.0}, y);
    ens += crps_energy(e, y);
  }
  CHECK(ens < point);
}

TEST_CASE("coverage and width") {
  const std::vector<double> lo{0, 0, 0, -INFINITY}, hi{1, 1, 1, INFINITY}, y{0.5, 2, 1, 100};
  const auto cw = coverage_and_width(lo, hi, y);
  CHECK(cw.coverage == doctest::Approx(0.75));
  CHECK(cw.mean_width == doctest::Approx(1.0));
  CHECK(cw.unbounded == 1);
}

TEST_CASE("boundary discontinuity is the scaled second difference") {
  const auto b = boundary_discontinuity(1.0, 2.0, 3.0, 4.0);
  CHECK(b.d == 0.0);
  CHECK(boundary_discontinuity(1.0, 2.0, 5.0, 4.0).d == doctest::Approx(0.5));
  CHECK(boundary_discontinuity(1.0, 2.0, 5.0, 0.0).degenerate);
}

TEST_CASE("exact Wilcoxon p-values match brute-force enumeration") {
  nc::Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + rng.uniform_int(0, 11);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::round(rng.normal() * 4) / 4;  // coarse grid creates ties
      b[i] = std::round(rng.normal() * 4) / 4;
    }
    for (Tail tail : {Tail::Less, Tail::Greater}) {
      const auto r = wilcoxon_one_sided(a, b, tail);
      if (r.undefined) continue;
      CHECK(r.exact);
      CHECK(r.p == doctest::Approx(enumerate_p(a, b, tail)).epsilon(1e-12));
    }
  }
}

TEST_CASE("Wilcoxon edge cases and large-sample approximation") {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 3};
  CHECK(wilcoxon_one_sided(a, b).undefined);
  const auto tiny = wilcoxon_one_sided(std::vector<double>{0, 0}, std::vector<double>{1, 1});
  CHECK(tiny.small_sample);
  CHECK(tiny.p == doctest::Approx(0.25));
  CHECK_THROWS_AS(wilcoxon_one_sided(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);

  // all 30 differences negative -> W+ = 0 and a small p
  std::vector<double> x(30), y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    x[i] = static_cast<double>(i);
    y[i] = static_cast<double>(i) + 1.0 + 0.01 * static_cast<double>(i);
  }
  const auto r = wilcoxon_one_sided(x, y, Tail::Less);
  CHECK_FALSE(r.exact);
  CHECK(r.w_plus == 0.0);
  CHECK(r.p < 1e-5);
  CHECK(wilcoxon_one_sided(x, y, Tail::Greater).p > 0.99);
}

TEST_CASE("aggregate ignores degenerate windows and NaN cells") {
  MetricsReport rep;
  WindowMetrics a, b, c;
  a.all_feature_mse = 1.0;
  a.crps = 2.0;
  b.all_feature_mse = 3.0;
  c.all_feature_mse = 100.0;
  c.degenerate = true;
  rep.windows = {a, b, c};
  const auto agg = rep.aggregate();
  CHECK(agg.all_feature_mse == doctest::Approx(2.0));
  CHECK(agg.crps == doctest::Approx(2.0));
  CHECK(std::isnan(agg.coverage));
  CHECK(rep.degenerate_count() == 1);
  CHECK(rep.to_csv().rfind(metrics_csv_header(), 0) == 0);
  CHECK(rep.to_json().find("all_feature_mse") != std::string::npos);
}
