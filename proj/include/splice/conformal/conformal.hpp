#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace splice::conformal {

struct EnsembleBand {
  std::vector<double> lo;
  std::vector<double> hi;
  std::size_t size() const { return lo.size(); }
};

// Linear interpolation between order statistics (h = (n-1) p).
double empirical_quantile(std::vector<double> values, double p);

// samples is [S, H] row-major. Levels alpha/2 and 1 - alpha/2 per hour.
EnsembleBand ensemble_quantiles(std::span<const double> samples, std::size_t n_samples, double alpha);

// max(lo - y, y - hi); negative strictly inside the band unless clamped.
double nonconformity(double lo, double hi, double y, bool clamp_at_zero = false);
std::vector<double> nonconformity(const EnsembleBand& band, std::span<const double> y, bool clamp_at_zero = false);

class CalibrationScores {
 public:
  CalibrationScores() = default;
  explicit CalibrationScores(std::vector<double> scores);
  void add(std::span<const double> scores);
  std::size_t size() const { return sorted_.size(); }
  bool empty() const { return sorted_.empty(); }
  const std::vector<double>& sorted() const;

 private:
  mutable std::vector<double> sorted_;
  mutable bool dirty_ = false;
};

// ceil((n+1)(1-alpha))-th smallest score; +inf when that rank exceeds n.
double cqr_quantile(const CalibrationScores& scores, double alpha);
std::size_t cqr_rank(std::size_t n, double alpha);

struct PredictionBand {
  std::vector<double> lo;
  std::vector<double> hi;
  bool unbounded = false;
};
PredictionBand cqr_band(const EnsembleBand& band, double q);

struct ACIState {
  double alpha_t = 0.05;
  double alpha_target = 0.05;
  double gamma = 0.01;
  double clamp_lo = 0.001;
  double clamp_hi = 0.999;
  std::size_t clamp_events = 0;
  double acc = 0.05;  // uncompensated running sum, alpha_t = acc + carry
  double carry = 0;
  std::vector<int> err;
  std::vector<double> alpha_trace;  // alpha_1 .. alpha_{T+1}
};
ACIState aci_init(double alpha, double gamma = 0.01, double clamp_lo = 0.001, double clamp_hi = 0.999);
// alpha_{t+1} = clamp(alpha_t + gamma (alpha_target - err))
void aci_update(ACIState& state, int err, double alpha_target);
void aci_update(ACIState& state, int err);

struct BoundReport {
  std::size_t T = 0;
  double deviation = 0;         // (1/T) sum err_t - alpha
  double telescoped = 0;        // (alpha_1 - alpha_{T+1}) / (gamma T)
  double identity_residual = 0;  // |deviation - telescoped|
  double bound = 0;             // (1 - 2 eps) / (gamma T)
  bool clamped = false;
  bool identity_holds = false;  // only meaningful for unclamped traces
  bool within_bound = false;
};
BoundReport coverage_bound_check(std::span<const int> err, std::span<const double> alpha_trace, double gamma,
                                 double eps, double alpha_target, double tolerance = 1e-12);

// One evaluation window: S sampled trajectories [S, H] plus the truth [H].
struct ConformalWindow {
  std::vector<double> samples;
  std::size_t n_samples = 0;
  std::vector<double> truth;
};
using WindowSampler = std::function<ConformalWindow(std::size_t window, std::size_t n_samples)>;

struct AciConfig {
  double alpha = 0.05;
  double gamma = 0.01;
  double clamp_lo = 0.001;
  double clamp_hi = 0.999;
  double cal_fraction = 0.5;
  std::size_t s_cal = 50;
  std::size_t s_inf = 20;
  bool clamp_scores_at_zero = false;
  // Median +/- quantile of |y - median| instead of CQR.
  bool symmetric = false;
};

struct AciStep {
  std::size_t t = 0;
  std::size_t window = 0;
  double alpha_t = 0;
  double lo = 0;
  double hi = 0;
  double y = 0;
  int err = 0;
};

struct AciReport {
  double aci_coverage = 0;
  double aci_width = 0;
  double cqr_coverage = 0;
  double cqr_width = 0;
  double alpha_T = 0;
  double q_static = 0;
  std::size_t n_cal_windows = 0;
  std::size_t n_online_windows = 0;
  std::size_t n_scores = 0;
  std::size_t unbounded_steps = 0;
  std::vector<double> window_coverage;  // ACI coverage per online window
  std::vector<AciStep> trace;
  BoundReport bound;
};

// Windows 0..n_cal-1 calibrate, the rest run online in order.
AciReport aci_run(const WindowSampler& sampler, std::size_t n_windows, const AciConfig& cfg);

void write_trace_csv(std::ostream& os, const std::vector<AciStep>& trace);
std::string summary_json(const AciReport& report, const AciConfig& cfg);

}  // namespace splice::conformal
