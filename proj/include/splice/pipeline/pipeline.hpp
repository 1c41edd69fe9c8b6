#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splice/bridge/bridge.hpp"
#include "splice/conformal/conformal.hpp"
#include "splice/data/protocol.hpp"
#include "splice/decoder/decoder.hpp"
#include "splice/jepa/jepa.hpp"
#include "splice/metrics/metrics.hpp"
#include "splice/pipeline/config.hpp"

namespace splice::pipeline {

// Independent RNG stream `stream` derived from the run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

// Loaded, normalised dataset plus the evaluation protocol.
struct Prepared {
  std::string name;  // preset name or csv file stem
  data::Series raw;
  data::Series norm;
  data::NormStats stats;
  data::MinMaxStats unit;  // per-feature [0,1] scaling fitted on training days
  data::Split split;
  std::vector<data::GapWindow> windows;
  std::string data_hash;
};

// Throws ProtocolError when the series admits no evaluation window.
Prepared prepare_data(const RunConfig& cfg);

// Bridge training windows: every start fully inside the training days, the
// last 15% of them (in time order) held out for early stopping.
struct BridgeWindows {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
BridgeWindows bridge_windows(std::size_t n_train, std::size_t gap_len,
                             std::size_t context_len = data::kContextDays);

struct StageTiming {
  std::string stage;
  double seconds = 0;
  bool cached = false;
};

// Trained components, filled lazily by the stage functions below.
struct Models {
  std::optional<jepa::JepaModel> jepa;
  std::optional<bridge::BridgeData> bdata;
  std::map<std::string, decoder::HourlyDecoder> decoders;  // "enhanced", "base", "untrained"
  std::map<bridge::Mode, bridge::BridgeNet> bridges;
  bridge::DiffusionSchedule schedule;
};

// Orchestrates the stage DAG JEPA -> decoder -> bridge with checkpoints in a
// run directory named by the training-manifest hash. A stage whose
// checkpoint already exists is loaded instead of retrained.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, bool use_cache = true);

  const RunConfig& config() const { return cfg_; }
  RunConfig& mutable_config() { return cfg_; }
  const Prepared& data() const { return data_; }
  Models& models() { return models_; }
  std::filesystem::path run_dir() const;
  std::string manifest_hash() const;

  // Stage entry points. Each throws TrainingError naming the stage when a
  // prerequisite is missing and `auto_prereq` is false.
  void stage_jepa();
  void stage_decoder(const std::string& name, bool auto_prereq = true);
  void stage_bridge(bridge::Mode mode, bool auto_prereq = true);
  // Stages required by a variant and decoder choice.
  void ensure(const Variant& v, const std::string& decoder_name);
  // Loads a stage from its checkpoint only; false if absent.
  bool load_stage_jepa();
  bool load_stage_decoder(const std::string& name);
  bool load_stage_bridge(bridge::Mode mode);

  void write_manifest() const;
  const std::vector<StageTiming>& timings() const { return timings_; }

 private:
  RunConfig cfg_;
  bool use_cache_;
  Prepared data_;
  Models models_;
  std::vector<StageTiming> timings_;
  std::map<std::string, std::string> stage_logs_;
  void build_bridge_data();
};

// One imputed gap: point trajectory plus optional ensemble members, both in
// raw feature units, each [gap_len * 24, d].
struct Imputation {
  std::vector<double> point;
  std::vector<double> members;
  std::size_t n_members = 0;
  std::vector<double> latent_point;  // [gap_len, repr], empty for seasonal-naive
};

struct ImputeOptions {
  std::size_t members = 1;  // ensemble members to draw (>= 1)
  std::uint64_t seed = 42;
};

// Decoder actually used by a variant: jepa-only always decodes with the daily
// head and seasonal-naive uses none.
std::string effective_decoder(const Variant& v, const std::string& decoder_name);

// Runs encode -> latent gap fill -> decode for one window. Generative
// variants draw `members` samples and use the first as the point estimate;
// the deterministic bridge perturbs its estimate with ensemble_sigma.
Imputation impute_window(Pipeline& p, const Variant& v, const std::string& decoder_name, const data::GapWindow& w,
                         const ImputeOptions& opt);

// Ground truth frames of a window's gap, raw units.
std::vector<double> gap_truth(const Prepared& d, const data::GapWindow& w);

// Point and ensemble metrics for one window.
metrics::WindowMetrics score_window(const Prepared& d, const data::GapWindow& w, const Imputation& imp);

struct EvalResult {
  metrics::MetricsReport report;
  std::optional<conformal::AciReport> aci;
  conformal::AciConfig aci_cfg;
  std::uint64_t seed = 0;
};

// Evaluates the configured variant over every protocol window.
EvalResult evaluate(Pipeline& p, const Variant& v, const std::string& decoder_name);

// Load-column extraction helpers.
std::vector<double> load_column(const std::vector<double>& frames, std::size_t n_features);

struct GuidanceRow {
  double scale = 1;
  double val_mse = 0;
};
struct GuidanceSweep {
  std::vector<GuidanceRow> rows;
  double selected = 1;
  double relative_spread = 0;  // (worst - best) / best
};
// Validation latent gap MSE per scale in `scales`. Throws ConfigError for a
// non-generative variant.
GuidanceSweep sweep_guidance(Pipeline& p, const Variant& v, const std::vector<double>& scales = {1, 2, 3, 4, 5},
                             std::size_t max_windows = 8);

}  // namespace splice::pipeline
