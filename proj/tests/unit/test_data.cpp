#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "splice/data/calendar.hpp"
#include "splice/data/csv.hpp"
#include "splice/data/dataset.hpp"
#include "splice/data/protocol.hpp"
#include "splice/data/synth.hpp"
#include "splice/errors.hpp"
#include "splice/numcore/rng.hpp"

using namespace splice;
using namespace splice::data;

namespace {

Date ymd(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}; }

std::string csv_text(std::size_t hours, std::size_t skip = SIZE_MAX) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (std::size_t i = 0; i < hours; ++i) {
    if (i == skip) continue;
    const auto d = add_days(ymd(2020, 1, 1), static_cast<long>(i / 24));
    os << format_date(d) << ";" << i % 24 << ";50;48;1;5;" << 100 + i % 24 << "\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("calendar arithmetic and encodings") {
  Date d;
  CHECK(parse_iso_date("2020-02-29", d));
  CHECK_FALSE(parse_iso_date("2021-02-29", d));
  CHECK_FALSE(parse_iso_date("2020-2-01", d));
  CHECK(format_date(add_days(ymd(2020, 12, 31), 1)) == "2021-01-01");
  CHECK(days_between(ymd(2020, 1, 1), ymd(2021, 1, 1)) == 366);
  CHECK(day_of_week(ymd(2024, 1, 1)) == 0);  // Monday
  CHECK(day_of_week(ymd(2024, 1, 7)) == 6);
  CHECK(day_of_year(ymd(2021, 3, 1)) == 59);
  const auto f = calendar_features(ymd(2024, 1, 1), 6);
  CHECK(f[0] == doctest::Approx(1.0));  // sin(2 pi 6/24)
  CHECK(std::abs(f[1]) < 1e-12);
  for (double x : f) CHECK(std::abs(x) <= 1.0 + 1e-12);
}

TEST_CASE("humidex follows the Canadian formula") {
  // 30 C air, 15 C dew point -> about 33.9
  const double h = humidex_canadian(86.0, 59.0);
  CHECK(h == doctest::Approx(33.9).epsilon(0.01));
  CHECK(humidex_canadian(86.0, 70.0) > h);
}

TEST_CASE("csv parsing, continuity repair and errors") {
  std::istringstream ok(csv_text(72));
  const auto rep = parse_csv(ok);
  CHECK(rep.records.size() == 72);
  CHECK(rep.interpolated == 0);

  std::istringstream gap(csv_text(72, 30));
  const auto rep2 = parse_csv(gap);
  CHECK(rep2.records.size() == 72);
  CHECK(rep2.interpolated == 1);
  CHECK(rep2.records[30].load == doctest::Approx(0.5 * (rep2.records[29].load + rep2.records[31].load)));

  std::istringstream bad(std::string(kCsvHeader) + "\n2020-01-01;0;50;48;1;5;abc\n");
  try {
    parse_csv(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream bad_header("Date,Heure\n");
  CHECK_THROWS_AS(parse_csv(bad_header), ParseError);

  // a long missing run beyond 1% of the span
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (std::size_t i = 0; i < 200; ++i) {
    if (i >= 50 && i < 60) continue;
    const auto d = add_days(ymd(2020, 1, 1), static_cast<long>(i / 24));
    os << format_date(d) << ";" << i % 24 << ";50;48;1;5;100\n";
  }
  std::istringstream lossy(os.str());
  CHECK_THROWS_AS(parse_csv(lossy), IngestionError);
}

TEST_CASE("csv write then parse is lossless") {
  const auto recs = synth_generate(synth_preset("volatile-mixed"), 3);
  std::stringstream ss;
  write_csv(ss, recs);
  const auto back = parse_csv(ss).records;
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); i += 997) {
    CHECK(back[i].load == doctest::Approx(recs[i].load).epsilon(1e-9));
    CHECK(back[i].hour == recs[i].hour);
  }
}

TEST_CASE("synthetic generator is a pure function of config and seed") {
  const auto cfg = synth_preset("stable-commercial");
  const auto a = synth_generate(cfg, 11), b = synth_generate(cfg, 11), c = synth_generate(cfg, 12);
  REQUIRE(a.size() == cfg.n_days * 24);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].load == b[i].load;
    differ = differ || a[i].load != c[i].load;
  }
  CHECK(same);
  CHECK(differ);
  auto small = cfg;
  small.n_days = 499;
  CHECK_THROWS_AS(synth_generate(small, 1), ConfigError);
  CHECK_THROWS_AS(synth_preset("nope"), ConfigError);

  const auto z = synth_generate(synth_preset("zero-inflated-lighting"), 1);
  for (const auto& r : z)
    if (r.hour >= 7 && r.hour <= 18) CHECK(r.load == 0.0);
}

TEST_CASE("weekday profile has zero weekly mean") {
  double s = 0;
  for (int d = 0; d < 7; ++d) s += weekday_profile(d);
  CHECK(std::abs(s) < 1e-12);
}

TEST_CASE("series layout and calendar columns") {
  const auto s = build_series(synth_generate(synth_preset("periodic"), 1));
  CHECK(s.n_days() == 800);
  CHECK(s.values.size() == 800 * 24 * kNumFeatures);
  CHECK(s.at(0, 6, kHourSin) == doctest::Approx(1.0));
  const auto cols = s.columns(2, 4, conditioning_columns());
  CHECK(cols.size() == 2 * 24 * conditioning_columns().size());
  CHECK(conditioning_columns().size() == 10);
  CHECK(std::find(conditioning_columns().begin(), conditioning_columns().end(), kLoad) == conditioning_columns().end());
}

TEST_CASE("sliding windows: worked examples") {
  CHECK_THROWS_AS(sliding_windows(600, 91), ProtocolError);
  const auto w = sliding_windows(700, 91);
  REQUIRE(w.size() == 15);
  CHECK(w.front().start == 230);
  CHECK(w.back().start == 244);
  CHECK_THROWS_AS(sliding_windows(456, 91), ProtocolError);
  const auto& m = w.front().day_mask;
  CHECK(m.size() == 456);
  CHECK(std::count(m.begin(), m.end(), true) == 91);
  CHECK_FALSE(m[364]);
  CHECK(m[365]);
}

TEST_CASE("sliding windows: start rule holds exactly for random lengths") {
  nc::Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng.uniform_int(400, 3000);
    const std::size_t gap = std::vector<std::size_t>{7, 30, 91}[rng.uniform_int(0, 2)];
    std::set<std::size_t> expected;
    for (std::size_t s = 0; s + 365 + gap <= n; ++s)
      if (static_cast<double>(s + 365) >= 0.85 * static_cast<double>(n)) expected.insert(s);
    if (expected.empty()) {
      CHECK_THROWS_AS(sliding_windows(n, gap), ProtocolError);
      continue;
    }
    const auto w = sliding_windows(n, gap);
    std::set<std::size_t> got;
    for (const auto& x : w) {
      got.insert(x.start);
      CHECK(satisfies_start_rule(x.start, n));
      CHECK(x.gap_end() <= n);
    }
    CHECK(got == expected);
  }
}

TEST_CASE("train/validation split keeps temporal order") {
  auto s = train_val_split(100);
  CHECK(s.n_train == 85);
  CHECK(s.n_val == 15);
  CHECK(train_val_split(101).n_val == 16);
  CHECK(s.train.back() + 1 == s.val.front());
  CHECK_THROWS_AS(train_val_split(10), ProtocolError);
}

TEST_CASE("normalisation statistics never see validation days") {
  auto s = build_series(synth_generate(synth_preset("stable-commercial"), 5));
  const auto split = train_val_split(s.n_days());
  const auto before = zscore_fit(s, split.n_train);
  for (std::size_t d = split.n_train; d < s.n_days(); ++d)
    for (auto& x : s.frame(d)) x = 1e9;  // poison the held-out days
  const auto after = zscore_fit(s, split.n_train);
  for (std::size_t c = 0; c < before.mean.size(); ++c) {
    CHECK(before.mean[c] == after.mean[c]);
    CHECK(before.std[c] == after.std[c]);
  }
}

TEST_CASE("z-score round trip and degenerate columns") {
  std::vector<double> rows{1, 5, 2, 5, 3, 5};
  const auto st = zscore_fit(rows, 2);
  CHECK(st.degenerate[1]);
  CHECK(st.std[1] == 1.0);
  CHECK(st.any_degenerate());
  auto copy = rows;
  zscore_apply(copy, st);
  CHECK(copy[0] == doctest::Approx(-1.0 / std::sqrt(2.0 / 3.0)));  // population std
  zscore_invert(copy, st);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(copy[i] == doctest::Approx(rows[i]));
}

TEST_CASE("min-max scaling by the truth range") {
  const std::vector<double> pred{0, 5, 10}, truth{2, 4, 6};
  const auto mm = minmax_truth_range(pred, truth);
  CHECK(mm.lo == 2);
  CHECK(mm.hi == 6);
  CHECK(mm.truth[2] == 1.0);
  CHECK(mm.pred[0] == -0.5);
  CHECK(minmax_truth_range(pred, std::vector<double>{3, 3, 3}).degenerate);
}

TEST_CASE("seasonal naive reproduces an exactly periodic series") {
  const auto s = build_series(synth_generate(synth_preset("periodic"), 2));
  const auto windows = sliding_windows(s.n_days(), 91);
  for (const auto& w : windows) {
    const auto sn = seasonal_naive(s, w);
    REQUIRE(sn.available);
    const auto fs = s.frame_size();
    for (std::size_t i = 0; i < sn.frames.size(); ++i) CHECK(sn.frames[i] == s.values[w.gap_begin() * fs + i]);
  }
  CHECK_FALSE(seasonal_naive(s, make_window(0, 30, 300)).available);
}

TEST_CASE("window manifest lists every window") {
  const auto w = sliding_windows(800, 91);
  const auto js = window_manifest_json(w, std::vector<bool>(w.size(), false));
  CHECK(js.find("\"window_start\"") != std::string::npos);
  CHECK(js.find("\"gap_len\"") != std::string::npos);
}
