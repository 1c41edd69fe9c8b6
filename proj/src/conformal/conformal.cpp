#include "splice/conformal/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "splice/errors.hpp"

namespace splice::conformal {

double empirical_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw CalibrationError("empirical_quantile: no values");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

EnsembleBand ensemble_quantiles(std::span<const double> samples, std::size_t n_samples, double alpha) {
  if (n_samples < 2) throw CalibrationError("ensemble_quantiles: need at least 2 samples, got " + std::to_string(n_samples));
  if (samples.size() % n_samples) throw DimensionError("ensemble_quantiles: samples are not [S, H]");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("ensemble_quantiles: alpha must be in (0,1)");
  const std::size_t H = samples.size() / n_samples;
  EnsembleBand band;
  band.lo.resize(H);
  band.hi.resize(H);
  std::vector<double> col(n_samples);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t s = 0; s < n_samples; ++s) col[s] = samples[s * H + h];
    band.lo[h] = empirical_quantile(col, alpha / 2);
    band.hi[h] = empirical_quantile(col, 1 - alpha / 2);
  }
  return band;
}

double nonconformity(double lo, double hi, double y, bool clamp_at_zero) {
  const double r = std::max(lo - y, y - hi);
  return clamp_at_zero ? std::max(r, 0.0) : r;
}

std::vector<double> nonconformity(const EnsembleBand& band, std::span<const double> y, bool clamp_at_zero) {
  if (y.size() != band.size()) throw DimensionError("nonconformity: band and truth lengths differ");
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = nonconformity(band.lo[i], band.hi[i], y[i], clamp_at_zero);
  return r;
}

CalibrationScores::CalibrationScores(std::vector<double> scores) : sorted_(std::move(scores)), dirty_(true) {
  for (double s : sorted_)
    if (!std::isfinite(s)) throw CalibrationError("calibration scores must be finite");
}

void CalibrationScores::add(std::span<const double> scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw CalibrationError("calibration scores must be finite");
    sorted_.push_back(s);
  }
  dirty_ = true;
}

const std::vector<double>& CalibrationScores::sorted() const {
  if (dirty_) {
    std::sort(sorted_.begin(), sorted_.end());
    dirty_ = false;
  }
  return sorted_;
}

std::size_t cqr_rank(std::size_t n, double alpha) {
  // Guard against (n+1)(1-alpha) landing a hair above an integer.
  const double r = std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-9);
  return static_cast<std::size_t>(std::max(r, 1.0));
}

double cqr_quantile(const CalibrationScores& scores, double alpha) {
  if (scores.empty()) throw CalibrationError("cqr_quantile: no calibration scores");
  const std::size_t k = cqr_rank(scores.size(), alpha);
  if (k > scores.size()) return std::numeric_limits<double>::infinity();
  return scores.sorted()[k - 1];
}

PredictionBand cqr_band(const EnsembleBand& band, double q) {
  PredictionBand out;
  out.unbounded = !std::isfinite(q);
  out.lo.resize(band.size());
  out.hi.resize(band.size());
  for (std::size_t i = 0; i < band.size(); ++i) {
    out.lo[i] = band.lo[i] - q;
    out.hi[i] = band.hi[i] + q;
  }
  return out;
}

ACIState aci_init(double alpha, double gamma, double clamp_lo, double clamp_hi) {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("aci: alpha must be in (0,1)");
  if (!(gamma > 0)) throw ConfigError("aci: gamma must be positive");
  if (!(clamp_lo < clamp_hi)) throw ConfigError("aci: clamp bounds out of order");
  ACIState s;
  s.alpha_target = alpha;
  s.alpha_t = std::clamp(alpha, clamp_lo, clamp_hi);
  s.acc = s.alpha_t;
  s.gamma = gamma;
  s.clamp_lo = clamp_lo;
  s.clamp_hi = clamp_hi;
  s.alpha_trace.push_back(s.alpha_t);
  return s;
}

void aci_update(ACIState& s, int err, double alpha_target) {
  const double step = s.gamma * (alpha_target - static_cast<double>(err));
  const double sum = s.acc + step;
  s.carry += std::abs(s.acc) >= std::abs(step) ? (s.acc - sum) + step : (step - sum) + s.acc;
  s.acc = sum;
  const double next = sum + s.carry;
  const double clamped = std::clamp(next, s.clamp_lo, s.clamp_hi);
  if (clamped != next) {
    ++s.clamp_events;
    s.acc = clamped;
    s.carry = 0;
  }
  s.alpha_t = clamped;
  s.err.push_back(err);
  s.alpha_trace.push_back(clamped);
}

void aci_update(ACIState& s, int err) { aci_update(s, err, s.alpha_target); }

BoundReport coverage_bound_check(std::span<const int> err, std::span<const double> trace, double gamma, double eps,
                                 double alpha_target, double tolerance) {
  if (err.empty() || trace.size() != err.size() + 1)
    throw DimensionError("coverage_bound_check: trace must hold T+1 alphas for T errors");
  BoundReport r;
  r.T = err.size();
  const double T = static_cast<double>(r.T);
  long long misses = 0;
  for (int e : err) misses += e;
  r.deviation = static_cast<double>(misses) / T - alpha_target;
  r.telescoped = (trace.front() - trace.back()) / (gamma * T);
  r.identity_residual = std::abs(r.deviation - r.telescoped);
  r.bound = (1.0 - 2.0 * eps) / (gamma * T);
  for (std::size_t t = 0; t < r.T; ++t) {
    const double free = trace[t] + gamma * (alpha_target - err[t]);
    if (free < eps || free > 1.0 - eps || std::abs(free - trace[t + 1]) > 1e-12) {
      r.clamped = true;
      break;
    }
  }
  r.identity_holds = !r.clamped && r.identity_residual <= tolerance;
  r.within_bound = std::abs(r.deviation) <= r.bound;
  return r;
}

}  // namespace splice::conformal
