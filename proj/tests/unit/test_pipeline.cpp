#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "splice/errors.hpp"
#include "splice/pipeline/commands.hpp"
#include "splice/pipeline/pipeline.hpp"

using namespace splice;
using namespace splice::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Smallest configuration that still runs every stage end to end.
RunConfig tiny_run(const fs::path& runs) {
  auto c = default_config("desk");
  c.n_days = 500;
  c.gap_len = 7;
  c.jepa_d_model = 8;
  c.jepa_heads = 2;
  c.jepa_layers = 1;
  c.jepa_epochs = 1;
  c.jepa_steps = 2;
  c.jepa_batch = 4;
  c.daily_epochs = 1;
  c.decoder_epochs = 1;
  c.bridge_d_model = 8;
  c.bridge_heads = 2;
  c.bridge_layers = 1;
  c.bridge_epochs = 1;
  c.bridge_steps = 1;
  c.bridge_batch = 2;
  c.ensemble_m = 3;
  c.s_cal = 4;
  c.s_inf = 3;
  c.ddim_steps = 2;
  c.fm_steps = 2;
  c.runs_dir = runs.string();
  return c;
}

}  // namespace

TEST_CASE("profiles and overrides") {
  const auto desk = default_config("desk");
  const auto paper = default_config("paper");
  CHECK(desk.profile == "desk");
  CHECK(paper.bridge_d_model == 128);
  CHECK(paper.bridge_layers == 6);
  CHECK(paper.jepa_epochs == 200);
  CHECK_THROWS_AS(default_config("laptop"), ConfigError);

  auto c = desk;
  apply_override(c, "gap_len=30");
  apply_override(c, "alpha", "0.1");
  apply_override(c, "dataset=synth:volatile-mixed");
  CHECK(c.gap_len == 30);
  CHECK(c.alpha == 0.1);
  CHECK(c.dataset == "synth:volatile-mixed");
  CHECK_THROWS_AS(apply_override(c, "no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "gap_len=abc"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "gap_len"), ConfigError);
  c.seed = 9;
  apply_override(c, "profile=paper");
  CHECK(c.bridge_d_model == 128);
  CHECK(c.seed == 9);
}

TEST_CASE("validation rejects inconsistent settings") {
  auto bad = [](const std::string& kv) {
    auto c = default_config("desk");
    apply_override(c, kv);
    return c;
  };
  for (const auto* kv : {"alpha=0", "alpha=1", "gamma=0", "cal_fraction=1", "ensemble_m=0", "guidance=0.5",
                         "decoder=fancy", "bridge_heads=3", "variant=nonsense", "gap_len=0"})
    CHECK_THROWS_AS(validate(bad(kv)), ConfigError);
  CHECK_NOTHROW(validate(bad("variant=bridge+fm-c+cqr")));
}

TEST_CASE("config file parsing") {
  std::istringstream ok("# comment\nseed = 5\n\nvariant = jepa-only  # trailing\nprofile = desk\n");
  const auto c = parse_config(ok);
  CHECK(c.seed == 5);
  CHECK(c.variant == "jepa-only");
  std::istringstream bad("seed = 5\nthis line is wrong\n");
  try {
    parse_config(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream unknown("colour = blue\n");
  CHECK_THROWS(parse_config(unknown));
  // profile applies before other keys wherever it appears
  std::istringstream order("bridge_epochs = 3\nprofile = paper\n");
  const auto o = parse_config(order);
  CHECK(o.bridge_epochs == 3);
  CHECK(o.bridge_d_model == 128);
  std::istringstream round(to_text(c));
  CHECK(to_map(parse_config(round)) == to_map(c));
}

TEST_CASE("seed environment variable") {
  auto c = default_config("desk");
  setenv(kSeedEnv, "123", 1);
  apply_env_seed(c);
  CHECK(c.seed == 123);
  setenv(kSeedEnv, "x1", 1);
  CHECK_THROWS_AS(apply_env_seed(c), ConfigError);
  unsetenv(kSeedEnv);
  apply_env_seed(c);
  CHECK(c.seed == 123);
}

TEST_CASE("training keys exclude inference-only settings") {
  const auto& k = training_keys();
  auto has = [&](const std::string& s) { return std::find(k.begin(), k.end(), s) != k.end(); };
  CHECK(has("seed"));
  CHECK(has("bridge_epochs"));
  CHECK(has("data_seed"));
  CHECK_FALSE(has("alpha"));
  CHECK_FALSE(has("variant"));
  CHECK_FALSE(has("ensemble_m"));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("variant grammar") {
  CHECK(parse_variant("bridge+aci").name() == "bridge+aci");
  CHECK(parse_variant("full").base == Base::Bridge);
  CHECK(parse_variant("bridge+fm-c+cqr").base == Base::BridgeFmC);
  CHECK(parse_variant("bridge+ddim").generative());
  CHECK_FALSE(parse_variant("seasonal-naive").neural());
  CHECK_THROWS_AS(parse_variant("jepa-only+ddim"), ConfigError);
  CHECK_THROWS_AS(parse_variant("bridge+aci+cqr"), ConfigError);
  CHECK_THROWS_AS(parse_variant("bridge+ddim+fm-a"), ConfigError);
  CHECK_THROWS_AS(parse_variant("seasonal-naive+aci"), ConfigError);
  CHECK_THROWS_AS(parse_variant("bridge+magic"), ConfigError);
  CHECK(effective_decoder(parse_variant("jepa-only"), "enhanced") == "daily");
  CHECK(effective_decoder(parse_variant("seasonal-naive"), "enhanced") == "none");
  CHECK(effective_decoder(parse_variant("bridge+aci"), "base") == "base");
}

TEST_CASE("bridge training windows stay inside the training days") {
  const auto w = bridge_windows(425, 7);
  CHECK(w.train.size() == 45);
  CHECK(w.val.size() == 9);
  CHECK(w.train.back() + 1 == w.val.front());
  CHECK(w.val.back() + 365 + 7 == 425);
  CHECK_THROWS_AS(bridge_windows(400, 91), ProtocolError);
  for (std::size_t n : {460u, 500u, 680u})
    for (std::size_t g : {7u, 30u, 91u}) {
      if (n < 365 + g + 2) continue;
      const auto b = bridge_windows(n, g);
      for (auto s : b.val) CHECK(s + 365 + g <= n);
    }
}

TEST_CASE("ablation ranking averages ties") {
  std::vector<AblationRow> rows(3);
  rows[0].window_mse = {1, 2, 3};
  rows[1].window_mse = {2, 2, 1};
  rows[2].window_mse = {3, 5, 2};
  for (auto& r : rows) r.gap_len = 91;
  rank_rows(rows);
  CHECK(rows[0].mean_rank == doctest::Approx((1 + 1.5 + 3) / 3.0));
  CHECK(rows[1].mean_rank == doctest::Approx((2 + 1.5 + 1) / 3.0));
  CHECK(rows[2].mean_rank == doctest::Approx((3 + 3 + 2) / 3.0));
  CHECK(rows[0].wins == 2);
  CHECK(rows[1].wins == 2);
  CHECK(rows[2].wins == 0);
  std::vector<AblationRow> mixed(2);
  mixed[0].gap_len = 7;
  mixed[0].window_mse = {1};
  mixed[1].gap_len = 30;
  mixed[1].window_mse = {5};
  rank_rows(mixed);
  CHECK(mixed[0].mean_rank == 1.0);
  CHECK(mixed[1].mean_rank == 1.0);
}

TEST_CASE("exit codes by error type") {
  CHECK(run_guarded([] { return kExitOk; }) == 0);
  CHECK(run_guarded([]() -> int { throw ProtocolError("p"); }) == kExitProtocol);
  CHECK(run_guarded([]() -> int { throw TrainingError("t"); }) == kExitTraining);
  CHECK(run_guarded([]() -> int { throw ConfigError("c"); }) == kExitError);
  CHECK(kExitProtocol == 2);
  CHECK(kExitTraining == 3);
}

TEST_CASE("a series too short for the protocol is rejected") {
  auto c = default_config("desk");
  c.n_days = 600;
  CHECK_THROWS_AS(prepare_data(c), ProtocolError);
  c.dataset = "csv:/nonexistent/file.csv";
  CHECK_THROWS(prepare_data(c));
  c.dataset = "bogus";
  CHECK_THROWS_AS(prepare_data(c), ConfigError);
}

TEST_CASE("dataset preparation is deterministic and leak-free") {
  auto c = default_config("desk");
  const auto a = prepare_data(c);
  const auto b = prepare_data(c);
  CHECK(a.data_hash == b.data_hash);
  CHECK(a.split.n_train == 680);
  CHECK(a.windows.size() == 30);
  CHECK(a.windows.front().start == 315);
  c.seed = 1;
  CHECK(prepare_data(c).data_hash == a.data_hash);
  c.data_seed = 8;
  CHECK(prepare_data(c).data_hash != a.data_hash);
}

TEST_CASE("decoder stage without a JEPA checkpoint is a training error") {
  const auto runs = fresh_dir("splice_pipeline_prereq");
  Pipeline p(tiny_run(runs));
  CHECK_THROWS_AS(p.stage_decoder("enhanced", false), TrainingError);
  CHECK_THROWS_AS(p.stage_bridge(bridge::Mode::Deterministic, false), TrainingError);
  CHECK(run_guarded([&] {
          p.stage_decoder("enhanced", false);
          return 0;
        }) == kExitTraining);
  auto cfg = tiny_run(runs);
  CHECK_THROWS_AS(cmd_impute(cfg, 0, false), TrainingError);
  fs::remove_all(runs);
}

TEST_CASE("end to end: train, impute, evaluate, report") {
  const auto runs = fresh_dir("splice_pipeline_e2e");
  auto cfg = tiny_run(runs);
  cfg.variant = "bridge+aci";
  const auto run_dir = cmd_train(cfg);
  CHECK(fs::exists(run_dir / "manifest.json"));
  CHECK(fs::exists(run_dir / "jepa.ckpt"));
  CHECK(fs::exists(run_dir / "decoder-enhanced.ckpt"));
  CHECK(fs::exists(run_dir / "bridge-det.ckpt"));
  const auto manifest = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  CHECK(manifest["seed"] == cfg.seed);

  // the same training config maps to the same run directory
  Pipeline again(cfg);
  CHECK(again.run_dir() == run_dir);
  auto infer_only = cfg;
  infer_only.alpha = 0.2;
  CHECK(Pipeline(infer_only).run_dir() == run_dir);
  auto retrain = cfg;
  retrain.seed = 43;
  CHECK(Pipeline(retrain).run_dir() != run_dir);

  const auto n_windows = again.data().windows.size();
  const auto imp = cmd_impute(cfg, n_windows - 1, true);
  CHECK(imp.hours == 7 * 24);
  CHECK(fs::exists(imp.frames_csv));
  CHECK(fs::exists(imp.members_csv));
  CHECK(fs::exists(imp.band_csv));
  CHECK(slurp(imp.frames_csv).rfind("date,hour,", 0) == 0);
  CHECK_THROWS_AS(cmd_impute(cfg, 0, false), ProtocolError);  // calibration window has no band
  CHECK_THROWS_AS(cmd_impute(cfg, n_windows, false), ProtocolError);

  const auto summary = cmd_evaluate(cfg, 2);
  const auto js = nlohmann::json::parse(slurp(summary));
  CHECK(js["kind"] == "evaluation");
  CHECK(js["seeds"].size() == 2);
  CHECK(js["metrics"]["all_feature_mse"]["per_seed"].size() == 2);
  CHECK(js.contains("conformal"));

  auto sn = cfg;
  sn.variant = "seasonal-naive";
  const auto sn_js = nlohmann::json::parse(slurp(cmd_evaluate(sn, 1)));
  CHECK(sn_js["variant"] == "seasonal-naive");
  CHECK(sn_js["decoder"] == "none");

  // cached evaluations keep the training time of every stage
  const auto after = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  std::size_t timed = 0;
  for (const auto& e : after["timing"])
    if (e["train_seconds"].is_number()) ++timed;
  CHECK(timed >= 3);

  const auto out = runs / "report";
  const auto files = cmd_report(runs, out);
  CHECK(fs::exists(out / "table1_accuracy.csv"));
  CHECK(fs::exists(out / "table11_conformal.csv"));
  CHECK(fs::exists(out / "bundle.json"));
  const auto table = slurp(out / "table1_accuracy.csv");
  const auto second = cmd_report(runs, out);
  CHECK(slurp(out / "table1_accuracy.csv") == table);
  CHECK(files.size() == second.size());
  CHECK_THROWS_AS(cmd_report(runs / "nothing_here", out), ProtocolError);
  fs::create_directories(runs / "empty");
  CHECK_THROWS_AS(cmd_report(runs / "empty", runs / "empty" / "report"), ProtocolError);
  fs::remove_all(runs);
}
