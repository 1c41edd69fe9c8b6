#include "splice/data/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "splice/errors.hpp"

namespace splice::data {

namespace {

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(delim, pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double parse_double(std::string_view s, const char* field, std::size_t line) {
  s = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(std::string("invalid ") + field + " value '" + std::string(s) + "'", line);
  return v;
}

int parse_int(std::string_view s, const char* field, std::size_t line) {
  s = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(std::string("invalid ") + field + " value '" + std::string(s) + "'", line);
  return v;
}

long hour_index(const HourlyRecord& r, const Date& origin) { return days_between(origin, r.date) * 24 + r.hour; }

}  // namespace

IngestReport parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  const auto header = trim(line);
  if (header != kCsvHeader) {
    if (header.find(';') == std::string_view::npos && header.find(',') != std::string_view::npos)
      throw ParseError("header uses ',' but the expected delimiter is ';' (" + std::string(kCsvHeader) + ")", 1);
    throw ParseError("unexpected header '" + std::string(header) + "', expected " + kCsvHeader, 1);
  }

  std::vector<HourlyRecord> raw;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto f = split(body, ';');
    if (f.size() != 7) throw ParseError("expected 7 fields, found " + std::to_string(f.size()), lineno);
    HourlyRecord r;
    if (!parse_iso_date(trim(f[0]), r.date)) throw ParseError("invalid date '" + std::string(f[0]) + "'", lineno);
    r.hour = parse_int(f[1], "Heure", lineno);
    if (r.hour < 0 || r.hour > 23) throw ParseError("hour out of range: " + std::to_string(r.hour), lineno);
    r.temperature = parse_double(f[2], "Temperature", lineno);
    r.humidex = parse_double(f[3], "Humidex", lineno);
    r.weather_code = parse_int(f[4], "Weather", lineno);
    r.wind = parse_double(f[5], "Wind", lineno);
    r.load = parse_double(f[6], "Load", lineno);
    if (!raw.empty()) {
      const long prev = hour_index(raw.back(), raw.front().date);
      const long cur = hour_index(r, raw.front().date);
      if (cur <= prev) throw ParseError("timestamp not strictly increasing (duplicate or out of order)", lineno);
    }
    raw.push_back(r);
  }
  if (raw.empty()) throw ParseError("no data rows", lineno);

  IngestReport rep;
  const Date origin = raw.front().date;
  const long span = hour_index(raw.back(), origin) - hour_index(raw.front(), origin) + 1;
  std::size_t run_missing = 0;
  for (std::size_t i = 1; i < raw.size(); ++i) {
    const long gap = hour_index(raw[i], origin) - hour_index(raw[i - 1], origin) - 1;
    if (gap > 1) run_missing += static_cast<std::size_t>(gap);
  }
  if (static_cast<double>(run_missing) > 0.01 * static_cast<double>(span))
    throw IngestionError(std::to_string(run_missing) + " of " + std::to_string(span) +
                         " hours missing in multi-hour runs (limit 1%)");

  rep.records.reserve(static_cast<std::size_t>(span));
  rep.records.push_back(raw.front());
  for (std::size_t i = 1; i < raw.size(); ++i) {
    const auto& a = raw[i - 1];
    const auto& b = raw[i];
    const long gap = hour_index(b, origin) - hour_index(a, origin) - 1;
    for (long k = 1; k <= gap; ++k) {
      const double w = static_cast<double>(k) / static_cast<double>(gap + 1);
      HourlyRecord fill;
      const long idx = hour_index(a, origin) + k;
      fill.date = add_days(origin, idx / 24);
      fill.hour = static_cast<int>(idx % 24);
      fill.temperature = (1 - w) * a.temperature + w * b.temperature;
      fill.humidex = (1 - w) * a.humidex + w * b.humidex;
      fill.weather_code = w < 0.5 ? a.weather_code : b.weather_code;
      fill.wind = (1 - w) * a.wind + w * b.wind;
      fill.load = (1 - w) * a.load + w * b.load;
      rep.filled_indices.push_back(rep.records.size());
      rep.records.push_back(fill);
      if (gap == 1)
        ++rep.interpolated;
      else
        ++rep.run_filled;
    }
    rep.records.push_back(b);
  }
  return rep;
}

IngestReport load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(std::ostream& out, const std::vector<HourlyRecord>& records) {
  out << kCsvHeader << '\n';
  out << std::setprecision(17);
  for (const auto& r : records)
    out << format_date(r.date) << ';' << r.hour << ';' << r.temperature << ';' << r.humidex << ';' << r.weather_code
        << ';' << r.wind << ';' << r.load << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<HourlyRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(out, records);
}

}  // namespace splice::data
