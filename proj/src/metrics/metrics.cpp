#include "splice/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "splice/errors.hpp"

namespace splice::metrics {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

double gap_mse_allfeat(std::span<const double> pred, std::span<const double> truth) {
  require_aligned(pred.size(), truth.size(), "gap_mse_allfeat");
  if (pred.empty()) return kNaN;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

LoadMse load_mse_minmax(std::span<const double> pred, std::span<const double> truth) {
  require_aligned(pred.size(), truth.size(), "load_mse_minmax");
  LoadMse out;
  if (truth.empty()) return out;
  auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
  out.range = *hi - *lo;
  if (!(out.range > 0)) {
    out.degenerate = true;
    return out;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = (pred[i] - truth[i]) / out.range;
    s += e * e;
  }
  out.mse = s / static_cast<double>(pred.size());
  return out;
}

Mape mape(std::span<const double> pred, std::span<const double> truth, double zero_threshold) {
  require_aligned(pred.size(), truth.size(), "mape");
  Mape out;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(truth[i]) < zero_threshold) {
      ++out.excluded;
      continue;
    }
    s += std::abs((pred[i] - truth[i]) / truth[i]);
    ++out.used;
  }
  if (out.used) out.pct = 100.0 * s / static_cast<double>(out.used);
  return out;
}

double rmse_physical(double mse01, double range) { return std::sqrt(mse01) * range; }

double mae_from_rmse(double rmse) { return std::sqrt(2.0 / std::numbers::pi) * rmse; }

double crps_energy(std::span<const double> x, double y) {
  if (x.empty()) throw DimensionError("crps_energy: empty ensemble");
  const double m = static_cast<double>(x.size());
  double a = 0.0, b = 0.0;
  for (double xi : x) a += std::abs(xi - y);
  for (double xi : x)
    for (double xj : x) b += std::abs(xi - xj);
  return a / m - b / (2.0 * m * m);
}

double crps_integral_oracle(std::span<const double> x, double y) {
  if (x.empty()) throw DimensionError("crps_integral_oracle: empty ensemble");
  std::vector<double> atoms(x.begin(), x.end());
  std::sort(atoms.begin(), atoms.end());
  std::vector<double> knots = atoms;
  knots.push_back(y);
  std::sort(knots.begin(), knots.end());
  const double m = static_cast<double>(atoms.size());
  double total = 0.0;
  // On [knots[k], knots[k+1]) both F and the step at y are constant.
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double left = knots[k];
    const double width = knots[k + 1] - left;
    if (width <= 0) continue;
    const auto below = std::upper_bound(atoms.begin(), atoms.end(), left) - atoms.begin();
    const double f = static_cast<double>(below) / m;
    const double step = left >= y ? 1.0 : 0.0;
    total += (f - step) * (f - step) * width;
  }
  return total;
}

double crps_ensemble_mean(std::span<const double> ensemble, std::size_t members, std::span<const double> truth) {
  if (members == 0 || ensemble.size() != members * truth.size())
    throw DimensionError("crps_ensemble_mean: ensemble is not [members, hours]");
  std::vector<double> col(members);
  double s = 0.0;
  for (std::size_t h = 0; h < truth.size(); ++h) {
    for (std::size_t m = 0; m < members; ++m) col[m] = ensemble[m * truth.size() + h];
    s += crps_energy(col, truth[h]);
  }
  return s / static_cast<double>(truth.size());
}

CoverageWidth coverage_and_width(std::span<const double> lo, std::span<const double> hi, std::span<const double> y) {
  require_aligned(lo.size(), y.size(), "coverage_and_width");
  require_aligned(hi.size(), y.size(), "coverage_and_width");
  CoverageWidth out;
  if (y.empty()) return out;
  std::size_t covered = 0, finite = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= lo[i] && y[i] <= hi[i]) ++covered;
    if (std::isfinite(lo[i]) && std::isfinite(hi[i])) {
      width += hi[i] - lo[i];
      ++finite;
    } else {
      ++out.unbounded;
    }
  }
  out.coverage = static_cast<double>(covered) / static_cast<double>(y.size());
  if (finite) out.mean_width = width / static_cast<double>(finite);
  return out;
}

Boundary boundary_discontinuity(double c23, double c24, double f1, double range) {
  Boundary b;
  if (!(range > 0)) {
    b.degenerate = true;
    return b;
  }
  b.d = std::abs(f1 - 2.0 * c24 + c23) / range;
  return b;
}

WindowMetrics MetricsReport::aggregate() const {
  WindowMetrics agg;
  auto fields = [](WindowMetrics& w) {
    return std::vector<double*>{&w.all_feature_mse, &w.load_mse_minmax, &w.mape_pct, &w.rmse_physical,
                                &w.mae_physical,    &w.crps,            &w.coverage, &w.mean_width,
                                &w.boundary_d};
  };
  auto out = fields(agg);
  std::vector<double> sums(out.size(), 0.0);
  std::vector<std::size_t> counts(out.size(), 0);
  for (auto w : windows) {
    if (w.degenerate) continue;
    auto in = fields(w);
    for (std::size_t k = 0; k < in.size(); ++k)
      if (std::isfinite(*in[k])) {
        sums[k] += *in[k];
        ++counts[k];
      }
    agg.mape_excluded += w.mape_excluded;
  }
  for (std::size_t k = 0; k < out.size(); ++k) *out[k] = counts[k] ? sums[k] / static_cast<double>(counts[k]) : kNaN;
  return agg;
}

std::size_t MetricsReport::degenerate_count() const {
  return static_cast<std::size_t>(std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.degenerate; }));
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json window_json(const WindowMetrics& w) {
  return {{"window_start", w.window_start}, {"all_feature_mse", num(w.all_feature_mse)},
          {"load_mse_minmax", num(w.load_mse_minmax)}, {"mape_pct", num(w.mape_pct)},
          {"rmse_physical", num(w.rmse_physical)}, {"mae_physical", num(w.mae_physical)},
          {"crps", num(w.crps)}, {"coverage", num(w.coverage)}, {"mean_width", num(w.mean_width)},
          {"boundary_D", num(w.boundary_d)}, {"mape_excluded_hours", w.mape_excluded},
          {"degenerate", w.degenerate}};
}

std::string csv_num(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::string metrics_csv_header() {
  return "dataset,variant,window_start,all_feature_mse,load_mse_minmax,mape_pct,rmse_physical,mae_physical,crps,"
         "coverage,mean_width,boundary_D,mape_excluded_hours,degenerate";
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["variant"] = variant;
  j["windows"] = nlohmann::json::array();
  for (const auto& w : windows) j["windows"].push_back(window_json(w));
  auto agg = window_json(aggregate());
  agg.erase("window_start");
  agg.erase("degenerate");
  j["aggregate"] = agg;
  j["degenerate_windows"] = degenerate_count();
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << metrics_csv_header() << '\n';
  for (const auto& w : windows)
    os << dataset << ',' << variant << ',' << w.window_start << ',' << csv_num(w.all_feature_mse) << ','
       << csv_num(w.load_mse_minmax) << ',' << csv_num(w.mape_pct) << ',' << csv_num(w.rmse_physical) << ','
       << csv_num(w.mae_physical) << ',' << csv_num(w.crps) << ',' << csv_num(w.coverage) << ','
       << csv_num(w.mean_width) << ',' << csv_num(w.boundary_d) << ',' << w.mape_excluded << ','
       << (w.degenerate ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace splice::metrics
