#include "splice/data/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "splice/errors.hpp"

namespace splice::data {

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names{
      "Load", "Temperature", "Humidex", "Weather", "Wind", "hour_sin", "hour_cos", "dow_sin", "dow_cos", "month_sin",
      "month_cos"};
  return names;
}

const std::vector<std::size_t>& conditioning_columns() {
  static const std::vector<std::size_t> cols{kTemperature, kHumidex, kWeather, kWind, kHourSin,
                                             kHourCos,     kDowSin,  kDowCos,  kMonthSin, kMonthCos};
  return cols;
}

const std::vector<std::size_t>& calendar_columns() {
  static const std::vector<std::size_t> cols{kHourSin, kHourCos, kDowSin, kDowCos, kMonthSin, kMonthCos};
  return cols;
}

std::vector<double> Series::columns(std::size_t day_begin, std::size_t day_end,
                                    const std::vector<std::size_t>& cols) const {
  std::vector<double> out;
  out.reserve((day_end - day_begin) * kHours * cols.size());
  for (std::size_t r = day_begin * kHours; r < day_end * kHours; ++r)
    for (auto c : cols) out.push_back(values[r * n_features + c]);
  return out;
}

Series build_series(const std::vector<HourlyRecord>& records) {
  std::size_t first = 0;
  while (first < records.size() && records[first].hour != 0) ++first;
  Series s;
  for (std::size_t i = first; i + kHours <= records.size(); i += kHours) {
    const Date d = records[i].date;
    for (std::size_t h = 0; h < kHours; ++h) {
      const auto& r = records[i + h];
      if (r.date != d || r.hour != static_cast<int>(h))
        throw IngestionError("records are not hour-continuous at " + format_date(r.date) + " hour " +
                             std::to_string(r.hour));
      const auto cal = calendar_features(r.date, r.hour);
      s.values.insert(s.values.end(), {r.load, r.temperature, r.humidex, static_cast<double>(r.weather_code), r.wind});
      s.values.insert(s.values.end(), cal.begin(), cal.end());
    }
    s.days.push_back(d);
  }
  if (s.days.empty()) throw IngestionError("no complete day in input");
  return s;
}

bool NormStats::any_degenerate() const { return std::find(degenerate.begin(), degenerate.end(), true) != degenerate.end(); }

NormStats zscore_fit(std::span<const double> rows, std::size_t n_cols) {
  if (n_cols == 0 || rows.size() % n_cols != 0 || rows.empty())
    throw DimensionError("zscore_fit: data is not a non-empty [rows, " + std::to_string(n_cols) + "] matrix");
  const std::size_t n = rows.size() / n_cols;
  NormStats st;
  st.mean.assign(n_cols, 0.0);
  st.std.assign(n_cols, 0.0);
  st.degenerate.assign(n_cols, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n_cols; ++j) st.mean[j] += rows[i * n_cols + j];
  for (auto& m : st.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n_cols; ++j) {
      const double d = rows[i * n_cols + j] - st.mean[j];
      st.std[j] += d * d;
    }
  for (std::size_t j = 0; j < n_cols; ++j) {
    st.std[j] = std::sqrt(st.std[j] / static_cast<double>(n));
    if (!(st.std[j] > 1e-12 * std::max(1.0, std::abs(st.mean[j])))) {
      st.std[j] = 1.0;
      st.degenerate[j] = true;
    }
  }
  return st;
}

NormStats zscore_fit(const Series& s, std::size_t n_train) {
  if (n_train == 0 || n_train > s.n_days()) throw DimensionError("zscore_fit: bad training day count");
  return zscore_fit(std::span<const double>(s.values).first(n_train * s.frame_size()), s.n_features);
}

void zscore_apply(std::span<double> rows, const NormStats& st) {
  const std::size_t c = st.mean.size();
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (rows[i] - st.mean[i % c]) / st.std[i % c];
}

void zscore_invert(std::span<double> rows, const NormStats& st) {
  const std::size_t c = st.mean.size();
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = rows[i] * st.std[i % c] + st.mean[i % c];
}

Series zscore_apply(const Series& s, const NormStats& stats) {
  if (stats.mean.size() != s.n_features) throw DimensionError("zscore_apply: stats do not match feature count");
  Series out = s;
  zscore_apply(out.values, stats);
  return out;
}

MinMaxPair minmax_truth_range(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || truth.empty()) throw DimensionError("minmax_truth_range: length mismatch");
  MinMaxPair out;
  auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
  out.lo = *lo;
  out.hi = *hi;
  out.degenerate = !(out.hi > out.lo);
  const double range = out.degenerate ? 1.0 : out.hi - out.lo;
  out.pred.resize(pred.size());
  out.truth.resize(truth.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.pred[i] = (pred[i] - out.lo) / range;
    out.truth[i] = (truth[i] - out.lo) / range;
  }
  return out;
}

MinMaxStats minmax_fit(std::span<const double> rows, std::size_t n_cols) {
  if (n_cols == 0 || rows.empty() || rows.size() % n_cols) throw DimensionError("minmax_fit: bad matrix");
  MinMaxStats st;
  st.lo.assign(n_cols, INFINITY);
  st.hi.assign(n_cols, -INFINITY);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    st.lo[i % n_cols] = std::min(st.lo[i % n_cols], rows[i]);
    st.hi[i % n_cols] = std::max(st.hi[i % n_cols], rows[i]);
  }
  return st;
}

void minmax_apply(std::span<double> rows, const MinMaxStats& st) {
  const std::size_t c = st.lo.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double range = st.hi[i % c] - st.lo[i % c];
    rows[i] = range > 0 ? (rows[i] - st.lo[i % c]) / range : 0.0;
  }
}

}  // namespace splice::data
