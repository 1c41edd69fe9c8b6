#include "splice/data/protocol.hpp"

#include <json.hpp>

#include "splice/errors.hpp"

namespace splice::data {

GapWindow make_window(std::size_t start, std::size_t gap_len, std::size_t context_len) {
  GapWindow w;
  w.start = start;
  w.context_len = context_len;
  w.gap_len = gap_len;
  w.day_mask.assign(context_len + gap_len, false);
  for (std::size_t i = context_len; i < context_len + gap_len; ++i) w.day_mask[i] = true;
  return w;
}

bool satisfies_start_rule(std::size_t start, std::size_t n_days, std::size_t context_len) {
  // Integer form of start + context >= 0.85 * n_days.
  return 100 * (start + context_len) >= 85 * n_days;
}

std::vector<GapWindow> sliding_windows(std::size_t n_days, std::size_t gap_len, std::size_t context_len) {
  if (n_days < context_len + gap_len)
    throw ProtocolError("sliding_windows: " + std::to_string(n_days) + " days cannot hold a " +
                        std::to_string(context_len) + "+" + std::to_string(gap_len) + " window");
  std::vector<GapWindow> out;
  for (std::size_t s = 0; s + context_len + gap_len <= n_days; ++s)
    if (satisfies_start_rule(s, n_days, context_len)) out.push_back(make_window(s, gap_len, context_len));
  if (out.empty())
    throw ProtocolError("sliding_windows: no start satisfies start+" + std::to_string(context_len) +
                        " >= 0.85*" + std::to_string(n_days) + " with the gap inside the series");
  return out;
}

Split train_val_split(std::size_t n_days) {
  if (n_days < 20) throw ProtocolError("train_val_split: need at least 20 days");
  Split sp;
  sp.n_val = (15 * n_days + 99) / 100;
  sp.n_train = n_days - sp.n_val;
  for (std::size_t i = 0; i < n_days; ++i) (i < sp.n_train ? sp.train : sp.val).push_back(i);
  return sp;
}

SeasonalNaiveResult seasonal_naive(const Series& history, const GapWindow& window) {
  SeasonalNaiveResult res;
  if (window.gap_begin() < kSeasonalLag || window.gap_end() > history.n_days()) return res;
  // Source days must be observed, i.e. precede the gap.
  if (window.gap_len > kSeasonalLag) return res;
  res.available = true;
  const std::size_t fs = history.frame_size();
  res.frames.resize(window.gap_len * fs);
  for (std::size_t g = 0; g < window.gap_len; ++g) {
    const std::size_t t = window.gap_begin() + g;
    auto src = history.frame(t - kSeasonalLag);
    std::copy(src.begin(), src.end(), res.frames.begin() + g * fs);
    auto truth = history.frame(t);
    for (std::size_t h = 0; h < kHours; ++h)
      for (auto c : calendar_columns())
        res.frames[g * fs + h * history.n_features + c] = truth[h * history.n_features + c];
  }
  return res;
}

std::string window_manifest_json(const std::vector<GapWindow>& windows, const std::vector<bool>& degenerate,
                                 const Series* series) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    nlohmann::json j{{"window_start", w.start},
                     {"gap_begin", w.gap_begin()},
                     {"gap_end", w.gap_end()},
                     {"gap_len", w.gap_len},
                     {"degenerate", i < degenerate.size() ? static_cast<bool>(degenerate[i]) : false}};
    if (series && w.gap_end() <= series->n_days()) {
      j["gap_first_date"] = format_date(series->days[w.gap_begin()]);
      j["gap_last_date"] = format_date(series->days[w.gap_end() - 1]);
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace splice::data
