#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace confrag {

struct Sample {
  std::vector<double> x;
  double y = 0.0;
  std::optional<double> y_gt;
};

// Immutable collection of samples sharing one feature dimensionality. The
// label range always reflects the observed labels.
class Dataset {
 public:
  explicit Dataset(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  std::size_t dim() const { return samples_.front().x.size(); }
  double label_min() const { return label_min_; }
  double label_max() const { return label_max_; }
  double label_range() const { return label_max_ - label_min_; }
  bool has_ground_truth() const;

  std::vector<double> labels() const;
  // Ground-truth labels; throws if any sample lacks one.
  std::vector<double> ground_truth() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
  // Copy with every y replaced by its ground truth.
  Dataset with_clean_labels() const;

 private:
  std::vector<Sample> samples_;
  double label_min_ = 0.0;
  double label_max_ = 0.0;
};

enum class NoiseKind { symmetric, gaussian };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;          // symmetric only
  double max_std_frac = 0.0;  // gaussian only
  std::uint64_t seed = 0;

  static NoiseSpec symmetric(double rate, std::uint64_t seed);
  static NoiseSpec gaussian(double max_std_frac, std::uint64_t seed);
  void validate() const;
};

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct CsvColumns {
  std::vector<std::string> features;
  std::string label = "y";
  std::optional<std::string> ground_truth;
};

Dataset load_csv(const std::filesystem::path& path, const CsvColumns& columns);

// Writes x0..x{d-1}, y, y_gt (empty when unknown) and a noisy flag, with
// round-trip precision.
void write_csv(const Dataset& ds, std::ostream& out);
void write_csv(const Dataset& ds, const std::filesystem::path& path);
void write_jsonl(const Dataset& ds, std::ostream& out);

// Smooth injective map from the normalized label t in [0, 1] into R^d:
// [t, sin(2 pi t)/4, cos(2 pi t)/4, t^2] for the first four coordinates,
// then the same pattern with harmonic m = k/4 + 1 (t^m, sin(2 pi m t)/4,
// cos(2 pi m t)/4, t^(m+1)).
std::vector<double> feature_map(double t, std::size_t d);

Dataset generate_synthetic(std::size_t n, std::size_t d, double label_lo, double label_hi,
                           double feature_noise_std, std::uint64_t seed);

Dataset inject_symmetric_noise(const Dataset& ds, double rate, std::uint64_t seed);
Dataset inject_gaussian_noise(const Dataset& ds, double max_std_frac, std::uint64_t seed);
Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec);

// Seeded proportional split; returns (train, test) with the original relative
// order preserved inside each part.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

}  // namespace confrag
