#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confrag/data.hpp"

namespace confrag {

double mae(std::span<const double> predictions, std::span<const double> targets);

// Relative error against a noise-free reference MAE: e / rho - 1.
double mrae(double e, double rho);

// Error Residual Ratio: mean |y - y_gt| over the selected set divided by the
// same mean over the whole dataset. Absent when the selection is empty or the
// dataset carries no label error. Throws if ground truth is missing.
std::optional<double> err(std::span<const std::size_t> selected, const Dataset& ds);

double selection_rate(std::span<const std::size_t> selected, const Dataset& ds);

struct MetricsReport {
  std::size_t epoch = 0;
  double mae = 0.0;
  std::optional<double> mrae;
  double selection_rate = 0.0;
  std::optional<double> err;
};

// One JSON object, MRAE reported in percent, absent values as null.
std::string to_json_line(const MetricsReport& report);

}  // namespace confrag
