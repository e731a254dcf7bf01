#include "confrag/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace confrag {

double mae(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("mae: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("mae: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += std::abs(predictions[i] - targets[i]);
  return sum / static_cast<double>(predictions.size());
}

double mrae(double e, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("mrae: reference MAE must be > 0");
  return e / rho - 1.0;
}

std::optional<double> err(std::span<const std::size_t> selected, const Dataset& ds) {
  const std::vector<double> gt = ds.ground_truth();
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) total += std::abs(ds[i].y - gt[i]);
  if (selected.empty() || total == 0.0) return std::nullopt;
  double picked = 0.0;
  for (std::size_t i : selected) {
    if (i >= ds.size()) throw std::out_of_range("err: index " + std::to_string(i) + " out of range");
    picked += std::abs(ds[i].y - gt[i]);
  }
  return (picked / static_cast<double>(selected.size())) / (total / static_cast<double>(ds.size()));
}

double selection_rate(std::span<const std::size_t> selected, const Dataset& ds) {
  for (std::size_t i : selected) {
    if (i >= ds.size()) throw std::out_of_range("selection_rate: index " + std::to_string(i) + " out of range");
  }
  return static_cast<double>(selected.size()) / static_cast<double>(ds.size());
}

std::string to_json_line(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["epoch"] = report.epoch;
  j["mae"] = report.mae;
  j["mrae_percent"] = report.mrae ? nlohmann::ordered_json(*report.mrae * 100.0) : nlohmann::ordered_json(nullptr);
  j["selection_rate"] = report.selection_rate;
  j["err"] = report.err ? nlohmann::ordered_json(*report.err) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

}  // namespace confrag
