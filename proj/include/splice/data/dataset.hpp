#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "splice/data/csv.hpp"

namespace splice::data {

inline constexpr std::size_t kHours = 24;

// Per-hour feature layout of a DailyFrame row.
enum Feature : std::size_t {
  kLoad = 0,
  kTemperature,
  kHumidex,
  kWeather,
  kWind,
  kHourSin,
  kHourCos,
  kDowSin,
  kDowCos,
  kMonthSin,
  kMonthCos,
  kNumFeatures
};

const std::array<std::string, kNumFeatures>& feature_names();

// Columns used as per-hour decoder conditioning: weather + calendar.
const std::vector<std::size_t>& conditioning_columns();
// Columns that are pure functions of the timestamp.
const std::vector<std::size_t>& calendar_columns();

// Contiguous run of complete days. values is [n_days, 24, d] row-major, so
// day i is the 24 x d DailyFrame starting at i * 24 * d.
struct Series {
  std::vector<Date> days;
  std::size_t n_features = kNumFeatures;
  std::vector<double> values;

  std::size_t n_days() const { return days.size(); }
  std::size_t frame_size() const { return kHours * n_features; }
  std::span<const double> frame(std::size_t day) const {
    return std::span<const double>(values).subspan(day * frame_size(), frame_size());
  }
  std::span<double> frame(std::size_t day) {
    return std::span<double>(values).subspan(day * frame_size(), frame_size());
  }
  double at(std::size_t day, std::size_t hour, std::size_t feature) const {
    return values[(day * kHours + hour) * n_features + feature];
  }
  // Rows [day_begin*24, day_end*24) restricted to `columns`.
  std::vector<double> columns(std::size_t day_begin, std::size_t day_end, const std::vector<std::size_t>& cols) const;
};

// Builds daily frames (raw units) from hour-continuous records, dropping a
// partial first/last day; computes calendar encodings.
Series build_series(const std::vector<HourlyRecord>& records);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> degenerate;  // constant on the fit rows; std forced to 1
  bool any_degenerate() const;
};

// Fit per-column z-score statistics on a row-major [rows, n_cols] matrix.
NormStats zscore_fit(std::span<const double> rows, std::size_t n_cols);
// Fits on days [0, n_train) of the series only.
NormStats zscore_fit(const Series& s, std::size_t n_train);
void zscore_apply(std::span<double> rows, const NormStats& stats);
void zscore_invert(std::span<double> rows, const NormStats& stats);
Series zscore_apply(const Series& s, const NormStats& stats);

// Min-max scaling by the ground-truth range of an evaluation window.
struct MinMaxPair {
  std::vector<double> pred;
  std::vector<double> truth;
  double lo = 0;
  double hi = 0;
  bool degenerate = false;
};
MinMaxPair minmax_truth_range(std::span<const double> pred, std::span<const double> truth);

// Per-feature [0,1] scaling fitted on the training split; used for the
// all-feature gap MSE.
struct MinMaxStats {
  std::vector<double> lo;
  std::vector<double> hi;
};
MinMaxStats minmax_fit(std::span<const double> rows, std::size_t n_cols);
void minmax_apply(std::span<double> rows, const MinMaxStats& stats);

}  // namespace splice::data
