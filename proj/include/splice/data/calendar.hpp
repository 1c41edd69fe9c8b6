#pragma once

#include <array>
#include <chrono>
#include <string>
#include <string_view>

namespace splice::data {

using Date = std::chrono::year_month_day;

// Strict YYYY-MM-DD; returns false on malformed or invalid dates.
bool parse_iso_date(std::string_view text, Date& out);
std::string format_date(const Date& d);
Date add_days(const Date& d, long days);
long days_between(const Date& from, const Date& to);
// Monday = 0 ... Sunday = 6.
int day_of_week(const Date& d);
// January 1st = 0.
int day_of_year(const Date& d);

// sin/cos of hour (period 24), day-of-week (period 7) and month (period 12).
std::array<double, 6> calendar_features(const Date& d, int hour);

// Humidex from air temperature and dew point, both in °F, via the Canadian
// (Environment Canada) formula evaluated in °C.
double humidex_canadian(double temperature_f, double dewpoint_f);

}  // namespace splice::data
