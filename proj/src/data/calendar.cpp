#include "splice/data/calendar.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace splice::data {

using namespace std::chrono;

bool parse_iso_date(std::string_view text, Date& out) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
  auto digits = [&](std::size_t pos, std::size_t len, int& v) {
    v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
      v = v * 10 + (text[i] - '0');
    }
    return true;
  };
  int y, m, d;
  if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return false;
  Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) return false;
  out = date;
  return true;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

Date add_days(const Date& d, long n) { return Date{sys_days{d} + days{n}}; }

long days_between(const Date& from, const Date& to) { return (sys_days{to} - sys_days{from}).count(); }

int day_of_week(const Date& d) { return static_cast<int>(weekday{sys_days{d}}.iso_encoding()) - 1; }

int day_of_year(const Date& d) {
  return static_cast<int>((sys_days{d} - sys_days{d.year() / January / 1}).count());
}

std::array<double, 6> calendar_features(const Date& d, int hour) {
  constexpr double tau = 2.0 * std::numbers::pi;
  const double h = tau * hour / 24.0;
  const double w = tau * day_of_week(d) / 7.0;
  const double m = tau * (static_cast<unsigned>(d.month()) - 1) / 12.0;
  return {std::sin(h), std::cos(h), std::sin(w), std::cos(w), std::sin(m), std::cos(m)};
}

double humidex_canadian(double temperature_f, double dewpoint_f) {
  const double t_c = (temperature_f - 32.0) * 5.0 / 9.0;
  const double td_k = (dewpoint_f - 32.0) * 5.0 / 9.0 + 273.15;
  const double e = 6.11 * std::exp(5417.7530 * (1.0 / 273.16 - 1.0 / td_k));
  return t_c + 0.5555 * (e - 10.0);
}

}  // namespace splice::data
