#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "confrag/config.hpp"
#include "confrag/data.hpp"
#include "confrag/fragmentation.hpp"
#include "confrag/metrics.hpp"
#include "confrag/netcore.hpp"

namespace confrag {

// Train split carries the (possibly noisy) observed labels; the test split
// carries clean labels. Features of both are standardized with train
// statistics.
struct PreparedData {
  Dataset train;
  Dataset test;
};
PreparedData prepare_data(const ExperimentConfig& cfg);

struct EpochRecord {
  MetricsReport metrics;
  std::size_t selected = 0;
  std::size_t selected_pred = 0;
  std::size_t selected_repr = 0;
  double jitter_delta = 0.0;
  std::vector<double> expert_loss;
  std::optional<double> regressor_loss;  // absent when the epoch was skipped
};

std::string to_json_line(const EpochRecord& record);

struct RunResult {
  ExperimentConfig config;
  std::optional<FragmentationScheme> scheme;
  std::optional<ContrastivePairing> pairing;
  std::vector<EpochRecord> epochs;
  std::vector<std::size_t> final_selection;
  Dataset train;
  Net regressor;

  const MetricsReport& final_metrics() const { return epochs.back().metrics; }
};

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<double> rho;  // noise-free reference MAE for MRAE
};

// Fragment, pair (or apply the override), then per epoch: jitter, train
// experts, build banks, select, train the regressor one epoch on the selection
// and evaluate on the clean test split. Vanilla mode trains on every sample.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

// Held-out MAE of the regressor trained on ground-truth labels with the same
// architecture, seeds and epochs.
double run_noise_free_reference(const ExperimentConfig& cfg);

struct PairingComparisonRow {
  Matching pairing;
  std::optional<double> err;
  double selection_rate = 0.0;
  double mae = 0.0;
};

// One run per distinct pairing with shared seeds. Duplicates are dropped with
// a warning.
std::vector<PairingComparisonRow> compare_pairings(const ExperimentConfig& cfg, const std::vector<Matching>& pairings);
void write_comparison_csv(const std::vector<PairingComparisonRow>& rows, std::ostream& out);

// Output files written into RunOptions::output_dir.
inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kSummaryFile = "summary.csv";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kSchemeFile = "scheme.json";

}  // namespace confrag
