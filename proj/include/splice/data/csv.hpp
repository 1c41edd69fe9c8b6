#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "splice/data/calendar.hpp"

namespace splice::data {

inline constexpr const char* kCsvHeader = "Date;Heure;Temperature;Humidex;Weather;Wind;Load";

struct HourlyRecord {
  Date date;
  int hour = 0;             // 0..23
  double temperature = 0;   // °F
  double humidex = 0;
  int weather_code = 0;
  double wind = 0;          // mph
  double load = 0;          // kW or kWh
};

struct IngestReport {
  std::vector<HourlyRecord> records;
  // Isolated single missing hours filled by linear interpolation.
  std::size_t interpolated = 0;
  // Hours filled inside longer missing runs (these count toward the 1% limit).
  std::size_t run_filled = 0;
  std::vector<std::size_t> filled_indices;
};

// Parses the semicolon-delimited hourly format and restores 1-hour
// continuity. Throws ParseError (with line number) on malformed input and
// IngestionError when hours missing in multi-hour runs exceed 1% of the span.
IngestReport parse_csv(std::istream& in);
IngestReport load_csv(const std::filesystem::path& path);

void write_csv(std::ostream& out, const std::vector<HourlyRecord>& records);
void write_csv(const std::filesystem::path& path, const std::vector<HourlyRecord>& records);

}  // namespace splice::data
