#include <CLI11.hpp>
#include <iostream>

#include "splice/pipeline/commands.hpp"

using namespace splice::pipeline;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.overrides, "override one key (key=value), repeatable")->take_all();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? default_config("desk") : load_config(c.config_path);
  apply_env_seed(cfg);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splice: latent gap filling for hourly load series"};
  app.require_subcommand(1);

  Common gen_c, train_c, impute_c, cal_c, eval_c, sweep_c, ablate_c;
  std::string gen_out = "data.csv";
  auto* gen = app.add_subcommand("gen-data", "write the configured dataset as hourly CSV");
  add_common(gen, gen_c);
  gen->add_option("-o,--out", gen_out, "output CSV path");

  auto* train = app.add_subcommand("train", "train JEPA, decoder and bridge stages");
  add_common(train, train_c);

  std::size_t window = 0;
  bool members = false;
  auto* impute = app.add_subcommand("impute", "fill one protocol window from trained checkpoints");
  add_common(impute, impute_c);
  impute->add_option("-w,--window", window, "protocol window index");
  impute->add_flag("--members", members, "also write per-member trajectories");

  auto* cal = app.add_subcommand("calibrate", "run CQR calibration and the ACI online phase");
  add_common(cal, cal_c);

  std::size_t seeds = 1;
  auto* eval = app.add_subcommand("evaluate", "score a variant over every protocol window");
  add_common(eval, eval_c);
  eval->add_option("--seeds", seeds, "number of consecutive seeds (3 for mean +/- std)");

  auto* sweep = app.add_subcommand("sweep-guidance", "validation gap MSE per guidance scale 1..5");
  add_common(sweep, sweep_c);

  std::string suite;
  auto* ablate = app.add_subcommand("ablate", "run an ablation suite");
  add_common(ablate, ablate_c);
  ablate->add_option("suite", suite, "incremental | backend | decoder | gap-length")->required();

  std::string results = "runs", report_out;
  auto* report = app.add_subcommand("report", "collect evaluation outputs into tables");
  report->add_option("results", results, "results directory");
  report->add_option("-o,--out", report_out, "output directory (default: <results>/report)");

  CLI11_PARSE(app, argc, argv);

  return run_guarded([&]() -> int {
    if (gen->parsed()) {
      cmd_gen_data(resolve(gen_c), gen_out);
      std::cout << gen_out << "\n";
    } else if (train->parsed()) {
      std::cout << cmd_train(resolve(train_c)).string() << "\n";
    } else if (impute->parsed()) {
      const auto out = cmd_impute(resolve(impute_c), window, members);
      std::cout << out.frames_csv.string() << " (" << out.hours << " hours)\n";
      if (!out.members_csv.empty()) std::cout << out.members_csv.string() << "\n";
      if (!out.band_csv.empty()) std::cout << out.band_csv.string() << "\n";
    } else if (cal->parsed()) {
      const auto cfg = resolve(cal_c);
      const auto rep = cmd_calibrate(cfg);
      std::cout << "cqr coverage " << rep.cqr_coverage << " width " << rep.cqr_width << "\n"
                << "aci coverage " << rep.aci_coverage << " width " << rep.aci_width << " alpha_T " << rep.alpha_T
                << "\n";
    } else if (eval->parsed()) {
      std::cout << cmd_evaluate(resolve(eval_c), seeds).string() << "\n";
    } else if (sweep->parsed()) {
      std::cout << cmd_sweep_guidance(resolve(sweep_c)).string() << "\n";
    } else if (ablate->parsed()) {
      std::cout << cmd_ablate(resolve(ablate_c), suite).string() << "\n";
    } else if (report->parsed()) {
      const std::filesystem::path out = report_out.empty() ? std::filesystem::path(results) / "report" : std::filesystem::path(report_out);
      for (const auto& f : cmd_report(results, out)) std::cout << f.string() << "\n";
    }
    return kExitOk;
  });
}
