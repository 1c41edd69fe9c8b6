#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <sstream>

#include "splice/errors.hpp"
#include "splice/pipeline/commands.hpp"

namespace splice::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& table1_columns() {
  static const std::vector<std::string> c{"dataset",      "variant",      "decoder",        "gap_len",
                                          "n_seeds",      "n_windows",    "degenerate",     "all_feature_mse_mean",
                                          "all_feature_mse_std", "load_mse_mean", "load_mse_std"};
  return c;
}

const std::vector<std::string>& table6_columns() {
  static const std::vector<std::string> c{"dataset", "variant", "decoder", "all_feature_mse", "delta_vs_jepa_only_pct"};
  return c;
}

const std::vector<std::string>& table7_columns() {
  static const std::vector<std::string> c{"dataset", "variant", "decoder", "mape_pct", "rmse", "mae", "crps"};
  return c;
}

const std::vector<std::string>& table11_columns() {
  static const std::vector<std::string> c{"dataset", "cqr_cov", "cqr_width", "aci_cov", "aci_width", "alpha_T"};
  return c;
}

namespace {

std::string cell(const json& v) {
  if (v.is_null()) return "nan";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(8) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

double number(const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); }

std::string header(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out + "\n";
}

std::string row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out + "\n";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<fs::path> cmd_report(const fs::path& results, const fs::path& out) {
  if (!fs::exists(results)) throw ProtocolError("report: results directory " + results.string() + " does not exist");
  std::vector<json> evals, ablations;
  std::vector<fs::path> traces;
  std::vector<fs::path> files;
  const auto out_root = fs::weakly_canonical(out).string() + "/";
  for (const auto& e : fs::recursive_directory_iterator(results)) {
    if (!e.is_regular_file()) continue;
    if (fs::weakly_canonical(e.path()).string().rfind(out_root, 0) == 0) continue;
    const auto name = e.path().filename().string();
    if (name == "summary.json" || name == "ablation.json") {
      auto j = json::parse(read_file(e.path()), nullptr, false);
      if (j.is_discarded() || !j.contains("kind")) continue;
      if (j["kind"] == "evaluation") evals.push_back(std::move(j));
      if (j["kind"] == "ablation") ablations.push_back(std::move(j));
    } else if (name == "band_trace.csv") {
      traces.push_back(e.path());
    }
  }
  if (evals.empty() && ablations.empty()) throw ProtocolError("report: no evaluation outputs under " + results.string());
  auto key = [](const json& j) {
    return cell(j["dataset"]) + "|" + cell(j["variant"]) + "|" + cell(j["decoder"]) + "|" + cell(j["gap_len"]);
  };
  std::sort(evals.begin(), evals.end(), [&](const json& a, const json& b) { return key(a) < key(b); });
  std::sort(traces.begin(), traces.end());

  std::string t1 = header(table1_columns()), t6 = header(table6_columns()), t7 = header(table7_columns()),
              t11 = header(table11_columns());
  std::map<std::string, double> jepa_only;  // dataset|gap -> mse
  for (const auto& j : evals)
    if (j["variant"] == "jepa-only")
      jepa_only[cell(j["dataset"]) + "|" + cell(j["gap_len"])] = number(j["metrics"]["all_feature_mse"]["mean"]);
  for (const auto& j : evals) {
    const auto& m = j["metrics"];
    t1 += row({cell(j["dataset"]), cell(j["variant"]), cell(j["decoder"]), cell(j["gap_len"]),
               std::to_string(j["seeds"].size()), cell(j["n_windows"]), cell(j["degenerate_windows"]),
               cell(m["all_feature_mse"]["mean"]), cell(m["all_feature_mse"]["std"]), cell(m["load_mse_minmax"]["mean"]),
               cell(m["load_mse_minmax"]["std"])});
    const double mse = number(m["all_feature_mse"]["mean"]);
    const auto jo = jepa_only.find(cell(j["dataset"]) + "|" + cell(j["gap_len"]));
    const double delta = jo != jepa_only.end() && jo->second > 0 ? 100.0 * (mse - jo->second) / jo->second : std::nan("");
    t6 += row({cell(j["dataset"]), cell(j["variant"]), cell(j["decoder"]), cell(m["all_feature_mse"]["mean"]),
               cell(std::isfinite(delta) ? json(delta) : json(nullptr))});
    t7 += row({cell(j["dataset"]), cell(j["variant"]), cell(j["decoder"]), cell(m["mape_pct"]["mean"]),
               cell(m["rmse_physical"]["mean"]), cell(m["mae_physical"]["mean"]), cell(m["crps"]["mean"])});
    if (j.contains("conformal")) {
      const auto& c = j["conformal"];
      t11 += row({cell(j["dataset"]), cell(c["cqr_cov"]), cell(c["cqr_width"]), cell(c["aci_cov"]),
                  cell(c["aci_width"]), cell(c["alpha_T"])});
    }
  }
  auto emit = [&](const fs::path& p, const std::string& text) {
    result_writer().write(p, text);
    files.push_back(p);
  };
  emit(out / "table1_accuracy.csv", t1);
  emit(out / "table6_internal_ablation.csv", t6);
  emit(out / "table7_physical_units.csv", t7);
  emit(out / "table11_conformal.csv", t11);

  if (!ablations.empty()) {
    std::sort(ablations.begin(), ablations.end(),
              [](const json& a, const json& b) { return cell(a["dataset"]) + cell(a["suite"]) < cell(b["dataset"]) + cell(b["suite"]); });
    std::string ab = "dataset,suite,row,variant,decoder,gap_len,all_feature_mse,crps,coverage,mean_rank,wins\n";
    for (const auto& a : ablations)
      for (const auto& r : a["rows"])
        ab += row({cell(a["dataset"]), cell(a["suite"]), "\"" + cell(r["row"]) + "\"", cell(r["variant"]),
                   cell(r["decoder"]), cell(r["gap_len"]), cell(r["all_feature_mse"]), cell(r["crps"]),
                   cell(r["coverage"]), cell(r["mean_rank"]), cell(r["wins"])});
    emit(out / "ablations.csv", ab);
  }

  // Plot-ready band traces, one file per evaluated run.
  for (const auto& t : traces) {
    const auto rel = fs::relative(t.parent_path(), results).string();
    std::string flat;
    for (char c : rel) flat += (c == '/' || c == '\\') ? '_' : c;
    emit(out / "traces" / (flat + ".csv"), read_file(t));
  }
  nlohmann::json bundle{{"evaluations", evals}, {"ablations", ablations}};
  emit(out / "bundle.json", bundle.dump(2) + "\n");
  return files;
}

}  // namespace splice::pipeline
