#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "splice/pipeline/pipeline.hpp"

namespace splice::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitProtocol = 2;
inline constexpr int kExitTraining = 3;

// Runs `body`, printing any exception to stderr and mapping it to an exit
// code: ProtocolError -> 2, TrainingError -> 3, anything else -> 1.
int run_guarded(const std::function<int()>& body);

// Serialises every result file write.
class ResultWriter {
 public:
  void write(const std::filesystem::path& path, const std::string& contents);

 private:
  std::mutex mu_;
};
ResultWriter& result_writer();

// Writes the dataset as hourly CSV.
void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_csv);

// Stages JEPA -> decoder -> bridge (plus the generative head the variant
// needs), then the manifest. Returns the run directory.
std::filesystem::path cmd_train(const RunConfig& cfg);

struct ImputeOutput {
  std::filesystem::path frames_csv;
  std::filesystem::path members_csv;  // empty unless requested
  std::filesystem::path band_csv;     // empty unless conformal
  std::size_t hours = 0;
};
// Requires trained checkpoints for every stage the variant uses.
ImputeOutput cmd_impute(const RunConfig& cfg, std::size_t window_index, bool write_members);

// Conformal calibration and online run; writes the band trace and summary.
conformal::AciReport cmd_calibrate(const RunConfig& cfg);

// Single- or multi-seed evaluation (seeds seed, seed+1, ...). Writes
// per-seed metrics plus a summary with mean and std; returns its path.
std::filesystem::path cmd_evaluate(const RunConfig& cfg, std::size_t n_seeds);

std::filesystem::path cmd_sweep_guidance(const RunConfig& cfg);

// Suites: incremental, backend, decoder, gap-length.
struct AblationRow {
  std::string label;
  std::string variant;
  std::string decoder;
  std::size_t gap_len = 0;
  std::size_t members = 1;
  metrics::WindowMetrics aggregate;
  std::vector<double> window_mse;  // all-feature MSE per window
  double mean_rank = 0;
  std::size_t wins = 0;
  double aci_coverage = metrics::kNaN;
  double aci_width = metrics::kNaN;
};
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::string& suite);
std::filesystem::path cmd_ablate(const RunConfig& cfg, const std::string& suite);

// Mean rank (ties averaged) and win counts across rows on shared windows;
// lower scores are better.
void rank_rows(std::vector<AblationRow>& rows);

// Scans `results` for evaluation and ablation outputs and writes table CSVs
// and plot-ready band traces into `out`. Returns the written files.
std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& results, const std::filesystem::path& out);

// Column headers of the emitted tables.
const std::vector<std::string>& table1_columns();
const std::vector<std::string>& table6_columns();
const std::vector<std::string>& table7_columns();
const std::vector<std::string>& table11_columns();

}  // namespace splice::pipeline
