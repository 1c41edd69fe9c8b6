#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "splice/data/csv.hpp"

namespace splice::data {

// Synthetic hourly load with weather covariates.
//
//   load(t) = base * [1 + a_day * sin(2 pi hour / 24 + phase_day)
//                      + a_week * weekday_profile(dow)
//                      + a_year * sin(2 pi doy / 365)]
//             + beta * (temp(t) - temp_mean) + eps,   eps ~ N(0, noise_sigma^2)
//
//   temp(t) = temp_mean + temp_year_amp * sin(2 pi (doy - 105) / 365)
//             + temp_day_amp * sin(2 pi (hour - 9) / 24) + AR(1)
//
// weekday_profile is +0.4 Mon-Fri and -1.0 Sat/Sun (zero mean over a week).
struct SynthConfig {
  std::string name = "custom";
  std::size_t n_days = 800;
  Date start{std::chrono::year{2019}, std::chrono::January, std::chrono::day{1}};

  double base_load = 100.0;
  double a_day = 0.3;
  double phase_day = -1.5707963267948966;
  double a_week = 0.1;
  double a_year = 0.1;
  double noise_sigma = 2.0;
  double beta_temp = 0.5;

  double temp_mean = 55.0;
  double temp_year_amp = 20.0;
  double temp_day_amp = 8.0;
  double temp_ar_phi = 0.95;
  double temp_ar_sigma = 1.0;

  double humidex_noise = 1.0;
  double wind_mean = 8.0;
  double wind_ar_phi = 0.9;
  double wind_sigma = 1.0;
  double cloud_ar_phi = 0.97;
  double cloud_sigma = 0.3;

  // Lighting-style feed: zero load during daylight hours [7, 18].
  bool zero_inflated = false;
  bool clip_at_zero = true;
};

// "stable-commercial", "volatile-mixed", "zero-inflated-lighting", and
// "periodic" (noise-free, exactly 7-day periodic). Throws ConfigError on an
// unknown name.
SynthConfig synth_preset(std::string_view name);
const std::vector<std::string>& synth_preset_names();

// Pure function of (config, seed). Throws ConfigError if n_days < 500.
std::vector<HourlyRecord> synth_generate(const SynthConfig& config, std::uint64_t seed);

double weekday_profile(int day_of_week);

}  // namespace splice::data
