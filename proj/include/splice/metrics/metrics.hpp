#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace splice::metrics {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Mean squared error over every element (features x hours).
double gap_mse_allfeat(std::span<const double> pred, std::span<const double> truth);

struct LoadMse {
  double mse = kNaN;
  double range = 0;
  bool degenerate = false;
};
// MSE after min-max scaling both series by the truth range.
LoadMse load_mse_minmax(std::span<const double> pred, std::span<const double> truth);

struct Mape {
  double pct = kNaN;
  std::size_t used = 0;
  std::size_t excluded = 0;  // hours with |truth| below the threshold
};
Mape mape(std::span<const double> pred, std::span<const double> truth, double zero_threshold = 1e-6);

// sqrt(MSE on [0,1]) * (max - min)
double rmse_physical(double mse01, double range);
// sqrt(2/pi) * RMSE (Gaussian errors).
double mae_from_rmse(double rmse);

// (1/M) sum |x_i - y| - (1/(2M^2)) sum_ij |x_i - x_j|
double crps_energy(std::span<const double> ensemble, double y);
// Exact integral of (F(x) - 1{x >= y})^2 for the empirical step CDF.
double crps_integral_oracle(std::span<const double> ensemble, double y);
// Mean CRPS over hours; ensemble is [members, hours] row-major.
double crps_ensemble_mean(std::span<const double> ensemble, std::size_t members, std::span<const double> truth);

struct CoverageWidth {
  double coverage = kNaN;
  double mean_width = kNaN;
  std::size_t unbounded = 0;  // infinite bands: counted as covering, excluded from the width mean
};
CoverageWidth coverage_and_width(std::span<const double> lo, std::span<const double> hi, std::span<const double> y);

struct Boundary {
  double d = kNaN;
  bool degenerate = false;
};
// |f1 - 2 c24 + c23| / range
Boundary boundary_discontinuity(double c23, double c24, double f1, double range);

enum class Tail { Less, Greater };

struct WilcoxonResult {
  double p = kNaN;
  double w_plus = 0;        // sum of ranks of positive differences a - b
  std::size_t n = 0;        // non-zero differences
  bool exact = false;
  bool undefined = false;   // every pair tied
  bool small_sample = false;  // n < 5
};
// One-sided signed-rank test. Tail::Less tests a < b (small W+).
// Exact null distribution for n <= 20 (average ranks for ties), normal
// approximation with tie and continuity correction above.
WilcoxonResult wilcoxon_one_sided(std::span<const double> a, std::span<const double> b, Tail tail = Tail::Less);

// Per-window scores; NaN where a metric does not apply to the variant.
struct WindowMetrics {
  std::size_t window_start = 0;
  double all_feature_mse = kNaN;
  double load_mse_minmax = kNaN;
  double mape_pct = kNaN;
  double rmse_physical = kNaN;
  double mae_physical = kNaN;
  double crps = kNaN;
  double coverage = kNaN;
  double mean_width = kNaN;
  double boundary_d = kNaN;
  std::size_t mape_excluded = 0;
  bool degenerate = false;
};

struct MetricsReport {
  std::string dataset;
  std::string variant;
  std::vector<WindowMetrics> windows;

  // Means over non-degenerate windows, ignoring NaN entries per column.
  WindowMetrics aggregate() const;
  std::size_t degenerate_count() const;
  std::string to_json() const;
  std::string to_csv() const;
};

std::string metrics_csv_header();

}  // namespace splice::metrics
