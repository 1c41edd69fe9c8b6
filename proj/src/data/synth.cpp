#include "splice/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splice/errors.hpp"
#include "splice/numcore/rng.hpp"

namespace splice::data {

double weekday_profile(int dow) { return dow < 5 ? 0.4 : -1.0; }

const std::vector<std::string>& synth_preset_names() {
  static const std::vector<std::string> names{"stable-commercial", "volatile-mixed", "zero-inflated-lighting",
                                              "periodic"};
  return names;
}

SynthConfig synth_preset(std::string_view name) {
  SynthConfig c;
  c.name = std::string(name);
  if (name == "stable-commercial") {
    c.base_load = 250.0;
    c.a_day = 0.35;
    c.a_week = 0.3;
    c.a_year = 0.08;
    c.noise_sigma = 4.0;
    c.beta_temp = 1.5;
  } else if (name == "volatile-mixed") {
    c.base_load = 40.0;
    c.a_day = 0.25;
    c.a_week = 0.08;
    c.a_year = 0.15;
    c.noise_sigma = 5.0;
    c.beta_temp = 0.6;
    c.temp_ar_sigma = 2.0;
    c.cloud_sigma = 0.5;
  } else if (name == "zero-inflated-lighting") {
    c.base_load = 12.0;
    c.a_day = 0.2;
    c.a_week = 0.05;
    c.a_year = 0.25;
    c.noise_sigma = 0.8;
    c.beta_temp = -0.05;
    c.zero_inflated = true;
  } else if (name == "periodic") {
    c.base_load = 100.0;
    c.a_day = 0.3;
    c.a_week = 0.2;
    c.a_year = 0.0;
    c.noise_sigma = 0.0;
    c.beta_temp = 0.4;
    c.temp_year_amp = 0.0;
    c.temp_ar_sigma = 0.0;
    c.humidex_noise = 0.0;
    c.wind_sigma = 0.0;
    c.cloud_sigma = 0.0;
  } else {
    throw ConfigError("unknown synthetic preset '" + std::string(name) + "'");
  }
  return c;
}

std::vector<HourlyRecord> synth_generate(const SynthConfig& c, std::uint64_t seed) {
  if (c.n_days < 500)
    throw ConfigError("synth_generate: n_days=" + std::to_string(c.n_days) +
                      " < 500 (gap windows need 456 days plus training data)");
  constexpr double tau = 2.0 * std::numbers::pi;
  nc::Rng rng(seed);
  std::vector<HourlyRecord> out;
  out.reserve(c.n_days * 24);
  double temp_ar = 0.0, wind_ar = 0.0, cloud_ar = 0.0, hum_ar = 0.0;
  for (std::size_t d = 0; d < c.n_days; ++d) {
    const Date date = add_days(c.start, static_cast<long>(d));
    const int doy = day_of_year(date);
    const int dow = day_of_week(date);
    for (int h = 0; h < 24; ++h) {
      temp_ar = c.temp_ar_phi * temp_ar + c.temp_ar_sigma * rng.normal();
      wind_ar = c.wind_ar_phi * wind_ar + c.wind_sigma * rng.normal();
      cloud_ar = c.cloud_ar_phi * cloud_ar + c.cloud_sigma * rng.normal();
      hum_ar = 0.9 * hum_ar + c.humidex_noise * rng.normal();
      const double eps = c.noise_sigma * rng.normal();

      HourlyRecord r;
      r.date = date;
      r.hour = h;
      r.temperature = c.temp_mean + c.temp_year_amp * std::sin(tau * (doy - 105) / 365.0) +
                      c.temp_day_amp * std::sin(tau * (h - 9) / 24.0) + temp_ar;
      r.humidex = (r.temperature - 32.0) * 5.0 / 9.0 + 0.15 * std::max(0.0, r.temperature - 60.0) + hum_ar;
      r.wind = std::max(0.0, c.wind_mean + wind_ar);
      const double cloud = std::abs(cloud_ar);
      r.weather_code = cloud < 0.4 ? 0 : cloud < 0.9 ? 1 : cloud < 1.5 ? 2 : 3;

      const double shape = 1.0 + c.a_day * std::sin(tau * h / 24.0 + c.phase_day) + c.a_week * weekday_profile(dow) +
                           c.a_year * std::sin(tau * doy / 365.0);
      double load = c.base_load * shape + c.beta_temp * (r.temperature - c.temp_mean) + eps;
      if (c.zero_inflated && h >= 7 && h <= 18) load = 0.0;
      if (c.clip_at_zero) load = std::max(0.0, load);
      r.load = load;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace splice::data
