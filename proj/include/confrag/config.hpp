#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "confrag/data.hpp"
#include "confrag/fragmentation.hpp"
#include "confrag/netcore.hpp"
#include "confrag/selection.hpp"

namespace confrag {

struct SyntheticSource {
  std::size_t n = 2000;
  std::size_t d = 2;
  double label_lo = 0.0;
  double label_hi = 100.0;
  double feature_noise_std = 0.05;
  std::uint64_t seed = 0;
};

struct CsvSource {
  std::string path;
  std::vector<std::string> feature_cols;
  std::string label_col = "y";
  std::optional<std::string> gt_col;
};

struct NetConfig {
  std::vector<std::size_t> hidden{32, 32};
  Activation activation = Activation::relu;
};

enum class Mode { confrag, confrag_r, vanilla };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);

// Per-epoch learning-rate multiplier. cosine decays from 1 at the first epoch
// towards 0 at the last: 0.5 (1 + cos(pi (epoch - 1) / epochs)).
enum class LrSchedule { constant, cosine };
std::string to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& name);
double lr_factor(LrSchedule schedule, std::size_t epoch, std::size_t epochs);

struct ExperimentConfig {
  std::variant<SyntheticSource, CsvSource> source = SyntheticSource{};
  std::optional<NoiseSpec> noise;
  int fragments = 4;
  double jitter = 0.05;
  std::size_t knn_k = 5;
  NetConfig expert_net;
  NetConfig regressor_net;
  std::size_t epochs = 100;
  double expert_lr = 0.05;
  double regressor_lr = 0.05;
  LrSchedule lr_schedule = LrSchedule::cosine;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::optional<Matching> pairing_override;
  Mode mode = Mode::confrag;
  SelectionCombine selection_combine = SelectionCombine::union_set;
  bool write_selection = true;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys are errors. Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Stable 64-bit FNV-1a hash of the resolved config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace confrag
