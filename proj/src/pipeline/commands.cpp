#include "splice/pipeline/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <json.hpp>
#include <sstream>

#include "splice/data/synth.hpp"
#include "splice/errors.hpp"

namespace splice::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

void ResultWriter::write(const fs::path& path, const std::string& contents) {
  std::lock_guard<std::mutex> lock(mu_);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

ResultWriter& result_writer() {
  static ResultWriter w;
  return w;
}

namespace {

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string fmt(double x) {
  if (!std::isfinite(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(8) << x;
  return os.str();
}

const std::vector<std::pair<std::string, double metrics::WindowMetrics::*>>& metric_fields() {
  static const std::vector<std::pair<std::string, double metrics::WindowMetrics::*>> f{
      {"all_feature_mse", &metrics::WindowMetrics::all_feature_mse},
      {"load_mse_minmax", &metrics::WindowMetrics::load_mse_minmax},
      {"mape_pct", &metrics::WindowMetrics::mape_pct},
      {"rmse_physical", &metrics::WindowMetrics::rmse_physical},
      {"mae_physical", &metrics::WindowMetrics::mae_physical},
      {"crps", &metrics::WindowMetrics::crps},
      {"coverage", &metrics::WindowMetrics::coverage},
      {"mean_width", &metrics::WindowMetrics::mean_width},
      {"boundary_d", &metrics::WindowMetrics::boundary_d},
  };
  return f;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  std::vector<double> v;
  for (double x : xs)
    if (std::isfinite(x)) v.push_back(x);
  if (v.empty()) return {metrics::kNaN, metrics::kNaN};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

fs::path eval_dir(const Pipeline& p, const Variant& v, const std::string& decoder) {
  return p.run_dir() / "eval" / slug(v.name() + "__" + effective_decoder(v, decoder));
}

void write_trace(const fs::path& path, const std::vector<conformal::AciStep>& trace) {
  std::ostringstream os;
  conformal::write_trace_csv(os, trace);
  result_writer().write(path, os.str());
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_csv) {
  std::vector<data::HourlyRecord> records;
  if (cfg.dataset.rfind("synth:", 0) == 0) {
    auto sc = data::synth_preset(cfg.dataset.substr(6));
    sc.n_days = cfg.n_days;
    records = data::synth_generate(sc, cfg.data_seed);
  } else if (cfg.dataset.rfind("csv:", 0) == 0) {
    records = data::load_csv(cfg.dataset.substr(4)).records;
  } else {
    throw ConfigError("dataset must be synth:<preset> or csv:<path>");
  }
  std::ostringstream os;
  data::write_csv(os, records);
  result_writer().write(out_csv, os.str());
}

fs::path cmd_train(const RunConfig& cfg) {
  Pipeline p(cfg);
  const auto v = parse_variant(cfg.variant);
  p.stage_jepa();
  if (v.base != Base::JepaOnly && v.neural()) {
    p.stage_decoder(cfg.decoder, false);
    p.stage_bridge(bridge::Mode::Deterministic, false);
    if (v.base == Base::BridgeDdim) p.stage_bridge(bridge::Mode::Diffusion, false);
    if (v.base == Base::BridgeFmA || v.base == Base::BridgeFmC) p.stage_bridge(bridge::Mode::FlowMatching, false);
  }
  p.write_manifest();
  return p.run_dir();
}

namespace {

// Loads every checkpoint the variant needs; missing ones name their stage.
void require_checkpoints(Pipeline& p, const Variant& v, const std::string& decoder) {
  if (!v.neural()) return;
  if (!p.load_stage_jepa())
    throw TrainingError("stage jepa: no checkpoint in " + p.run_dir().string() + " (run `train` first)");
  if (v.base == Base::JepaOnly) return;
  if (decoder != "daily" && decoder != "untrained" && !p.load_stage_decoder(decoder))
    throw TrainingError("stage decoder (" + decoder + "): no checkpoint in " + p.run_dir().string());
  auto need = [&](bridge::Mode m) {
    if (!p.load_stage_bridge(m))
      throw TrainingError("stage bridge (" + bridge::mode_name(m) + "): no checkpoint in " + p.run_dir().string());
  };
  if (v.base == Base::Bridge || v.base == Base::BridgeFmC) need(bridge::Mode::Deterministic);
  if (v.base == Base::BridgeDdim) need(bridge::Mode::Diffusion);
  if (v.base == Base::BridgeFmA || v.base == Base::BridgeFmC) need(bridge::Mode::FlowMatching);
}

std::string frames_csv(const Prepared& d, const data::GapWindow& w, const std::vector<double>& frames,
                       std::size_t member = SIZE_MAX) {
  std::ostringstream os;
  const auto& names = data::feature_names();
  const std::size_t nf = d.raw.n_features, hours = w.gap_len * data::kHours;
  const std::size_t n_traj = frames.size() / (hours * nf);
  for (std::size_t m = 0; m < n_traj; ++m)
    for (std::size_t r = 0; r < hours; ++r) {
      if (m == 0 && r == 0) {
        os << (member == SIZE_MAX ? "" : "member,") << "date,hour";
        for (const auto& n : names) os << "," << n;
        os << "\n";
      }
      if (member != SIZE_MAX) os << m << ",";
      os << data::format_date(d.raw.days[w.gap_begin() + r / data::kHours]) << "," << r % data::kHours;
      for (std::size_t f = 0; f < nf; ++f) os << "," << fmt(frames[(m * hours + r) * nf + f]);
      os << "\n";
    }
  return os.str();
}

}  // namespace

ImputeOutput cmd_impute(const RunConfig& cfg, std::size_t window_index, bool write_members) {
  Pipeline p(cfg);
  const auto v = parse_variant(cfg.variant);
  require_checkpoints(p, v, cfg.decoder);
  const auto& d = p.data();
  if (window_index >= d.windows.size())
    throw ProtocolError("impute: window " + std::to_string(window_index) + " out of range (" +
                        std::to_string(d.windows.size()) + " windows)");
  const auto& w = d.windows[window_index];
  const bool ensemble = write_members && v.neural() && v.base != Base::JepaOnly;
  const auto imp = impute_window(p, v, cfg.decoder, w, {ensemble ? cfg.ensemble_m : 1, cfg.seed});
  ImputeOutput out;
  const auto dir = p.run_dir() / "impute" / slug(v.name() + "__w" + std::to_string(window_index));
  out.hours = imp.point.size() / d.raw.n_features;
  out.frames_csv = dir / "gap.csv";
  result_writer().write(out.frames_csv, frames_csv(d, w, imp.point));
  if (ensemble && imp.n_members > 0) {
    out.members_csv = dir / "members.csv";
    result_writer().write(out.members_csv, frames_csv(d, w, imp.members, 0));
  }
  if (v.conformal != Conformal::None) {
    auto res = evaluate(p, v, cfg.decoder);
    const auto& rep = *res.aci;
    std::vector<conformal::AciStep> steps;
    if (v.conformal == Conformal::Aci) {
      for (const auto& s : rep.trace)
        if (s.window == window_index) steps.push_back(s);
      if (steps.empty())
        throw ProtocolError("impute: window " + std::to_string(window_index) +
                            " is a calibration window; ACI bands exist for windows >= " +
                            std::to_string(rep.n_cal_windows));
    } else {
      const auto band_imp = impute_window(p, v, cfg.decoder, w, {cfg.s_inf, cfg.seed});
      const auto samples = load_column(band_imp.members, d.raw.n_features);
      const auto eb = conformal::ensemble_quantiles(samples, band_imp.n_members, cfg.alpha);
      const auto band = conformal::cqr_band(eb, rep.q_static);
      const auto y = load_column(gap_truth(d, w), d.raw.n_features);
      for (std::size_t h = 0; h < y.size(); ++h) {
        const int err = (y[h] < band.lo[h] || y[h] > band.hi[h]) ? 1 : 0;
        steps.push_back({h, window_index, cfg.alpha, band.lo[h], band.hi[h], y[h], err});
      }
    }
    out.band_csv = dir / "band.csv";
    write_trace(out.band_csv, steps);
  }
  return out;
}

conformal::AciReport cmd_calibrate(const RunConfig& cfg) {
  Pipeline p(cfg);
  auto v = parse_variant(cfg.variant);
  if (!v.neural() || v.base == Base::JepaOnly)
    throw ConfigError("calibrate: variant " + v.name() + " has no ensemble to calibrate");
  if (v.conformal == Conformal::None) v.conformal = Conformal::Aci;
  auto res = evaluate(p, v, cfg.decoder);
  const auto dir = p.run_dir() / "calibration" / slug(v.name() + "__" + effective_decoder(v, cfg.decoder));
  write_trace(dir / "band_trace.csv", res.aci->trace);
  result_writer().write(dir / "summary.json", conformal::summary_json(*res.aci, res.aci_cfg) + "\n");
  p.write_manifest();
  return *res.aci;
}

fs::path cmd_evaluate(const RunConfig& cfg, std::size_t n_seeds) {
  if (n_seeds == 0) throw ConfigError("evaluate: need at least one seed");
  const auto v = parse_variant(cfg.variant);
  std::vector<EvalResult> results;
  std::vector<std::uint64_t> seeds;
  std::string dataset;
  for (std::size_t k = 0; k < n_seeds; ++k) {
    RunConfig c = cfg;
    c.seed = cfg.seed + k;
    Pipeline p(c);
    auto res = evaluate(p, v, cfg.decoder);
    const auto dir = eval_dir(p, v, cfg.decoder);
    result_writer().write(dir / "metrics.json", res.report.to_json() + "\n");
    result_writer().write(dir / "metrics.csv", res.report.to_csv());
    if (res.aci) {
      write_trace(dir / "band_trace.csv", res.aci->trace);
      result_writer().write(dir / "aci_summary.json", conformal::summary_json(*res.aci, res.aci_cfg) + "\n");
    }
    p.write_manifest();
    dataset = p.data().name;
    seeds.push_back(c.seed);
    results.push_back(std::move(res));
  }
  json s;
  s["kind"] = "evaluation";
  s["dataset"] = dataset;
  s["variant"] = v.name();
  s["decoder"] = effective_decoder(v, cfg.decoder);
  s["gap_len"] = cfg.gap_len;
  s["seeds"] = seeds;
  s["n_windows"] = results.front().report.windows.size();
  s["degenerate_windows"] = results.front().report.degenerate_count();
  json m = json::object();
  for (const auto& [name, field] : metric_fields()) {
    std::vector<double> per_seed;
    for (const auto& r : results) per_seed.push_back(r.report.aggregate().*field);
    const auto [mean, sd] = mean_std(per_seed);
    json ps = json::array();
    for (double x : per_seed) ps.push_back(num_or_null(x));
    m[name] = {{"mean", num_or_null(mean)}, {"std", num_or_null(sd)}, {"per_seed", ps}};
  }
  s["metrics"] = m;
  if (results.front().aci) {
    std::vector<double> cc, cw, ac, aw, at;
    for (const auto& r : results) {
      cc.push_back(r.aci->cqr_coverage);
      cw.push_back(r.aci->cqr_width);
      ac.push_back(r.aci->aci_coverage);
      aw.push_back(r.aci->aci_width);
      at.push_back(r.aci->alpha_T);
    }
    s["conformal"] = {{"cqr_cov", num_or_null(mean_std(cc).first)}, {"cqr_width", num_or_null(mean_std(cw).first)},
                      {"aci_cov", num_or_null(mean_std(ac).first)}, {"aci_width", num_or_null(mean_std(aw).first)},
                      {"alpha_T", num_or_null(mean_std(at).first)}};
  }
  const auto path = fs::path(cfg.runs_dir) / "evaluations" /
                    slug(dataset + "-g" + std::to_string(cfg.gap_len) + "-" + v.name() + "__" + effective_decoder(v, cfg.decoder) + "-s" +
                         std::to_string(cfg.seed) + "x" + std::to_string(n_seeds)) /
                    "summary.json";
  result_writer().write(path, s.dump(2) + "\n");
  return path;
}

fs::path cmd_sweep_guidance(const RunConfig& cfg) {
  Pipeline p(cfg);
  const auto v = parse_variant(cfg.variant);
  const auto sw = sweep_guidance(p, v);
  std::ostringstream os;
  os << "w,val_gap_mse,selected\n";
  for (const auto& r : sw.rows) os << fmt(r.scale) << "," << fmt(r.val_mse) << "," << (r.scale == sw.selected) << "\n";
  const auto dir = p.run_dir() / "sweep" / slug(v.name());
  result_writer().write(dir / "guidance.csv", os.str());
  json j{{"kind", "guidance-sweep"}, {"dataset", p.data().name}, {"variant", v.name()},
         {"selected", sw.selected}, {"relative_spread", sw.relative_spread}};
  result_writer().write(dir / "guidance.json", j.dump(2) + "\n");
  p.write_manifest();
  return dir / "guidance.csv";
}

void rank_rows(std::vector<AblationRow>& rows) {
  if (rows.empty()) return;
  for (auto& r : rows) {
    r.mean_rank = 0;
    r.wins = 0;
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;  // rank only rows that share windows
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].gap_len].push_back(i);
  for (const auto& [gap, idx] : groups) {
    const std::size_t n_win = rows[idx.front()].window_mse.size();
    std::size_t used = 0;
    for (std::size_t w = 0; w < n_win; ++w) {
      std::vector<std::pair<double, std::size_t>> s;
      for (auto i : idx)
        if (w < rows[i].window_mse.size() && std::isfinite(rows[i].window_mse[w])) s.push_back({rows[i].window_mse[w], i});
      if (s.size() != idx.size()) continue;
      ++used;
      std::sort(s.begin(), s.end());
      for (std::size_t a = 0; a < s.size();) {
        std::size_t b = a;
        while (b + 1 < s.size() && s[b + 1].first == s[a].first) ++b;
        const double rank = 0.5 * static_cast<double>(a + b) + 1.0;
        for (std::size_t k = a; k <= b; ++k) {
          rows[s[k].second].mean_rank += rank;
          if (a == 0) ++rows[s[k].second].wins;
        }
        a = b + 1;
      }
    }
    for (auto i : idx) rows[i].mean_rank = used ? rows[i].mean_rank / static_cast<double>(used) : metrics::kNaN;
  }
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::string& suite) {
  struct Spec {
    std::string label, variant, decoder;
    std::size_t members;
  };
  std::vector<Spec> specs;
  std::vector<std::size_t> gaps{cfg.gap_len};
  if (suite == "incremental") {
    specs = {{"(a) bridge -> daily decoder", "bridge", "daily", 1},
             {"(b) + hourly conditioning", "bridge", "base", 1},
             {"(c) + load-weighted loss, noise aug., capacity", "bridge", "enhanced", 1},
             {"(d) + ensemble", "bridge", "enhanced", cfg.ensemble_m},
             {"(e) + ACI", "bridge+aci", "enhanced", cfg.ensemble_m}};
  } else if (suite == "backend") {
    specs = {{"DDIM-" + std::to_string(cfg.ddim_steps), "bridge+ddim", cfg.decoder, cfg.ensemble_m},
             {"FM-A", "bridge+fm-a", cfg.decoder, cfg.ensemble_m},
             {"FM-C", "bridge+fm-c", cfg.decoder, cfg.ensemble_m}};
  } else if (suite == "decoder") {
    specs = {{"base", "bridge", "base", 1}, {"enhanced", "bridge", "enhanced", 1}};
  } else if (suite == "gap-length") {
    specs = {{"seasonal-naive", "seasonal-naive", cfg.decoder, 1},
             {"jepa-only", "jepa-only", cfg.decoder, 1},
             {"splice", "bridge", cfg.decoder, 1}};
    gaps = {7, 30, 91};
  } else {
    throw ConfigError("ablate: unknown suite '" + suite + "' (incremental | backend | decoder | gap-length)");
  }
  std::vector<AblationRow> rows;
  for (auto gap : gaps) {
    RunConfig c = cfg;
    c.gap_len = gap;
    Pipeline p(c);
    for (const auto& sp : specs) {
      p.mutable_config().ensemble_m = sp.members;
      const auto v = parse_variant(sp.variant);
      auto res = evaluate(p, v, sp.decoder);
      AblationRow r;
      r.label = sp.label;
      r.variant = v.name();
      r.decoder = effective_decoder(v, sp.decoder);
      r.gap_len = gap;
      r.members = sp.members;
      r.aggregate = res.report.aggregate();
      for (const auto& w : res.report.windows) r.window_mse.push_back(w.all_feature_mse);
      if (res.aci) {
        r.aci_coverage = res.aci->aci_coverage;
        r.aci_width = res.aci->aci_width;
      }
      rows.push_back(std::move(r));
    }
    p.write_manifest();
  }
  rank_rows(rows);
  return rows;
}

fs::path cmd_ablate(const RunConfig& cfg, const std::string& suite) {
  const auto rows = run_ablation(cfg, suite);
  const auto name = prepare_data(cfg).name;
  std::ostringstream os;
  os << "suite,row,variant,decoder,gap_len,members,all_feature_mse,load_mse_minmax,crps,coverage,mean_width,"
        "mean_rank,wins\n";
  json j;
  j["kind"] = "ablation";
  j["suite"] = suite;
  j["dataset"] = name;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    const double cov = std::isfinite(r.aci_coverage) ? r.aci_coverage : r.aggregate.coverage;
    const double wid = std::isfinite(r.aci_width) ? r.aci_width : r.aggregate.mean_width;
    os << suite << ",\"" << r.label << "\"," << r.variant << "," << r.decoder << "," << r.gap_len << "," << r.members
       << "," << fmt(r.aggregate.all_feature_mse) << "," << fmt(r.aggregate.load_mse_minmax) << ","
       << fmt(r.aggregate.crps) << "," << fmt(cov) << "," << fmt(wid) << "," << fmt(r.mean_rank) << "," << r.wins
       << "\n";
    j["rows"].push_back({{"row", r.label},
                         {"variant", r.variant},
                         {"decoder", r.decoder},
                         {"gap_len", r.gap_len},
                         {"members", r.members},
                         {"all_feature_mse", num_or_null(r.aggregate.all_feature_mse)},
                         {"load_mse_minmax", num_or_null(r.aggregate.load_mse_minmax)},
                         {"crps", num_or_null(r.aggregate.crps)},
                         {"coverage", num_or_null(cov)},
                         {"mean_width", num_or_null(wid)},
                         {"mean_rank", num_or_null(r.mean_rank)},
                         {"wins", r.wins}});
  }
  const auto dir = fs::path(cfg.runs_dir) / "ablations" / slug(name + "-" + suite + "-s" + std::to_string(cfg.seed));
  result_writer().write(dir / "ablation.csv", os.str());
  result_writer().write(dir / "ablation.json", j.dump(2) + "\n");
  return dir / "ablation.csv";
}

}  // namespace splice::pipeline
