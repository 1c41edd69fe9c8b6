#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "splice/conformal/conformal.hpp"
#include "splice/errors.hpp"

namespace splice::conformal {

namespace {

// Band centre/edges for one window, before the conformal adjustment.
struct BaseBand {
  EnsembleBand band;  // symmetric mode stores the median in both lo and hi
};

BaseBand base_band(const ConformalWindow& w, const AciConfig& cfg) {
  if (w.n_samples < 2 || w.samples.size() != w.n_samples * w.truth.size())
    throw DimensionError("aci_run: sampler returned a malformed window");
  BaseBand b;
  if (!cfg.symmetric) {
    b.band = ensemble_quantiles(w.samples, w.n_samples, cfg.alpha);
    return b;
  }
  const std::size_t H = w.truth.size();
  b.band.lo.resize(H);
  std::vector<double> col(w.n_samples);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t s = 0; s < w.n_samples; ++s) col[s] = w.samples[s * H + h];
    b.band.lo[h] = empirical_quantile(col, 0.5);
  }
  b.band.hi = b.band.lo;
  return b;
}

std::vector<double> scores_for(const BaseBand& b, const std::vector<double>& y, const AciConfig& cfg) {
  if (!cfg.symmetric) return nonconformity(b.band, y, cfg.clamp_scores_at_zero);
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = std::abs(y[i] - b.band.lo[i]);
  return r;
}

}  // namespace

AciReport aci_run(const WindowSampler& sampler, std::size_t n_windows, const AciConfig& cfg) {
  if (!(cfg.cal_fraction > 0 && cfg.cal_fraction < 1)) throw ConfigError("aci_run: cal_fraction must be in (0,1)");
  std::size_t n_cal = static_cast<std::size_t>(std::floor(cfg.cal_fraction * static_cast<double>(n_windows)));
  n_cal = std::max<std::size_t>(n_cal, 1);
  if (n_windows < n_cal + 2)
    throw ProtocolError("aci_run: " + std::to_string(n_windows) + " windows leave fewer than 2 online windows");

  AciReport rep;
  rep.n_cal_windows = n_cal;
  rep.n_online_windows = n_windows - n_cal;

  CalibrationScores pool;
  for (std::size_t w = 0; w < n_cal; ++w) {
    const auto win = sampler(w, cfg.s_cal);
    pool.add(scores_for(base_band(win, cfg), win.truth, cfg));
  }
  rep.n_scores = pool.size();
  rep.q_static = cqr_quantile(pool, cfg.alpha);

  ACIState st = aci_init(cfg.alpha, cfg.gamma, cfg.clamp_lo, cfg.clamp_hi);
  std::size_t aci_cov = 0, cqr_cov = 0, steps = 0, aci_finite = 0;
  double aci_w = 0, cqr_w = 0;
  for (std::size_t w = n_cal; w < n_windows; ++w) {
    const auto win = sampler(w, cfg.s_inf);
    const auto b = base_band(win, cfg);
    std::size_t covered = 0;
    for (std::size_t h = 0; h < win.truth.size(); ++h) {
      const double y = win.truth[h];
      const double q = cqr_quantile(pool, st.alpha_t);
      AciStep step;
      step.t = steps;
      step.window = w;
      step.alpha_t = st.alpha_t;
      step.lo = b.band.lo[h] - q;
      step.hi = b.band.hi[h] + q;
      step.y = y;
      step.err = (y >= step.lo && y <= step.hi) ? 0 : 1;
      if (std::isfinite(q)) {
        aci_w += step.hi - step.lo;
        ++aci_finite;
      } else {
        ++rep.unbounded_steps;
      }
      aci_cov += 1 - step.err;
      covered += 1 - step.err;

      const double slo = b.band.lo[h] - rep.q_static, shi = b.band.hi[h] + rep.q_static;
      if (y >= slo && y <= shi) ++cqr_cov;
      cqr_w += shi - slo;

      aci_update(st, step.err);
      rep.trace.push_back(step);
      ++steps;
    }
    rep.window_coverage.push_back(win.truth.empty() ? 0.0
                                                    : static_cast<double>(covered) / static_cast<double>(win.truth.size()));
  }
  if (steps == 0) throw ProtocolError("aci_run: online windows contain no hours");
  const double T = static_cast<double>(steps);
  rep.aci_coverage = static_cast<double>(aci_cov) / T;
  rep.aci_width = aci_finite ? aci_w / static_cast<double>(aci_finite) : std::numeric_limits<double>::infinity();
  rep.cqr_coverage = static_cast<double>(cqr_cov) / T;
  rep.cqr_width = cqr_w / T;
  rep.alpha_T = st.alpha_t;
  rep.bound = coverage_bound_check(st.err, st.alpha_trace, cfg.gamma, cfg.clamp_lo, cfg.alpha);
  return rep;
}

void write_trace_csv(std::ostream& os, const std::vector<AciStep>& trace) {
  os << "t,window,alpha_t,lo,hi,y,err\n";
  os.precision(12);
  for (const auto& s : trace)
    os << s.t << ',' << s.window << ',' << s.alpha_t << ',' << s.lo << ',' << s.hi << ',' << s.y << ',' << s.err << '\n';
}

std::string summary_json(const AciReport& r, const AciConfig& cfg) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j{{"alpha", cfg.alpha},
                   {"gamma", cfg.gamma},
                   {"symmetric", cfg.symmetric},
                   {"cqr", {{"coverage", r.cqr_coverage}, {"mean_width", num(r.cqr_width)}, {"q_hat", num(r.q_static)}}},
                   {"aci",
                    {{"coverage", r.aci_coverage},
                     {"mean_width", num(r.aci_width)},
                     {"alpha_T", r.alpha_T},
                     {"unbounded_steps", r.unbounded_steps}}},
                   {"calibration_windows", r.n_cal_windows},
                   {"online_windows", r.n_online_windows},
                   {"calibration_scores", r.n_scores},
                   {"bound",
                    {{"T", r.bound.T},
                     {"deviation", r.bound.deviation},
                     {"bound", r.bound.bound},
                     {"within_bound", r.bound.within_bound},
                     {"clamped", r.bound.clamped},
                     {"identity_residual", r.bound.identity_residual}}}};
  return j.dump(2);
}

}  // namespace splice::conformal
