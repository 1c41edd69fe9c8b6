#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splice/data/dataset.hpp"

namespace splice::data {

inline constexpr std::size_t kContextDays = 365;
inline constexpr std::size_t kSeasonalLag = 364;

struct GapWindow {
  std::size_t start = 0;
  std::size_t context_len = kContextDays;
  std::size_t gap_len = 91;
  // One entry per window day; true marks hidden (gap) days.
  std::vector<bool> day_mask;

  std::size_t length() const { return context_len + gap_len; }
  std::size_t gap_begin() const { return start + context_len; }
  std::size_t gap_end() const { return start + context_len + gap_len; }
};

GapWindow make_window(std::size_t start, std::size_t gap_len, std::size_t context_len = kContextDays);

// All stride-1 starts s with s + 365 >= 0.85 * n_days and s + 365 + gap_len <= n_days.
// Throws ProtocolError when none exists.
std::vector<GapWindow> sliding_windows(std::size_t n_days, std::size_t gap_len,
                                       std::size_t context_len = kContextDays);
bool satisfies_start_rule(std::size_t start, std::size_t n_days, std::size_t context_len = kContextDays);

struct Split {
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
// Last ceil(0.15 * n_days) days are validation.
Split train_val_split(std::size_t n_days);

struct SeasonalNaiveResult {
  bool available = false;
  // gap_len frames, raw feature units, calendar columns taken from the gap days.
  std::vector<double> frames;
};
// Copies each gap day t from day t - 364.
SeasonalNaiveResult seasonal_naive(const Series& history, const GapWindow& window);

// {"window_start", "gap_begin", "gap_end", "gap_len", "degenerate"} per window.
std::string window_manifest_json(const std::vector<GapWindow>& windows, const std::vector<bool>& degenerate,
                                 const Series* series = nullptr);

}  // namespace splice::data
