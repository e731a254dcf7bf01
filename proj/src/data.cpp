#include "confrag/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "confrag/random.hpp"

namespace confrag {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(begin, end - begin + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_real(const std::string& cell) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

Dataset::Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("dataset must not be empty");
  const std::size_t d = samples_.front().x.size();
  if (d == 0) throw std::invalid_argument("samples must have at least one feature");
  label_min_ = samples_.front().y;
  label_max_ = samples_.front().y;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.x.size() != d) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has " + std::to_string(s.x.size()) +
                                  " features, expected " + std::to_string(d));
    }
    if (!std::isfinite(s.y) || (s.y_gt && !std::isfinite(*s.y_gt))) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has a non-finite label");
    }
    label_min_ = std::min(label_min_, s.y);
    label_max_ = std::max(label_max_, s.y);
  }
  if (!(label_max_ > label_min_)) {
    throw std::invalid_argument("dataset labels must span a non-empty range");
  }
}

bool Dataset::has_ground_truth() const {
  return std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.y_gt.has_value(); });
}

std::vector<double> Dataset::labels() const {
  std::vector<double> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.y);
  return out;
}

std::vector<double> Dataset::ground_truth() const {
  std::vector<double> out;
  out.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!samples_[i].y_gt) throw std::runtime_error("sample " + std::to_string(i) + " has no ground-truth label");
    out.push_back(*samples_[i].y_gt);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples_.size()) throw std::out_of_range("subset index " + std::to_string(i) + " out of range");
    out.push_back(samples_[i]);
  }
  return Dataset(std::move(out));
}

Dataset Dataset::with_clean_labels() const {
  std::vector<Sample> out = samples_;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out[i].y_gt) throw std::runtime_error("sample " + std::to_string(i) + " has no ground-truth label");
    out[i].y = *out[i].y_gt;
  }
  return Dataset(std::move(out));
}

NoiseSpec NoiseSpec::symmetric(double rate, std::uint64_t seed) {
  NoiseSpec spec;
  spec.kind = NoiseKind::symmetric;
  spec.rate = rate;
  spec.seed = seed;
  spec.validate();
  return spec;
}

NoiseSpec NoiseSpec::gaussian(double max_std_frac, std::uint64_t seed) {
  NoiseSpec spec;
  spec.kind = NoiseKind::gaussian;
  spec.max_std_frac = max_std_frac;
  spec.seed = seed;
  spec.validate();
  return spec;
}

void NoiseSpec::validate() const {
  switch (kind) {
    case NoiseKind::symmetric:
      if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("noise.rate must lie in [0, 1]");
      if (max_std_frac != 0.0) throw std::invalid_argument("noise.max_std_frac is only valid for gaussian noise");
      break;
    case NoiseKind::gaussian:
      if (!(max_std_frac > 0.0 && max_std_frac <= 1.0)) {
        throw std::invalid_argument("noise.max_std_frac must lie in (0, 1]");
      }
      if (rate != 0.0) throw std::invalid_argument("noise.rate is only valid for symmetric noise");
      break;
  }
}

std::string to_string(NoiseKind kind) {
  return kind == NoiseKind::symmetric ? "symmetric" : "gaussian";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "symmetric") return NoiseKind::symmetric;
  if (name == "gaussian") return NoiseKind::gaussian;
  throw std::invalid_argument("unknown noise kind '" + name + "'");
}

Dataset load_csv(const std::filesystem::path& path, const CsvColumns& columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv file '" + path.string() + "' is empty");
  const std::vector<std::string> header = split_row(line);
  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("csv column '" + name + "' not found in '" + path.string() + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  if (columns.features.empty()) throw std::invalid_argument("at least one feature column is required");
  std::vector<std::size_t> feature_idx;
  for (const auto& name : columns.features) feature_idx.push_back(column_index(name));
  const std::size_t label_idx = column_index(columns.label);
  std::optional<std::size_t> gt_idx;
  if (columns.ground_truth) gt_idx = column_index(*columns.ground_truth);

  std::vector<Sample> samples;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_row(line);
    auto cell = [&](std::size_t idx, const std::string& name) -> const std::string& {
      if (idx >= cells.size()) {
        throw std::runtime_error("csv row " + std::to_string(row) + ": missing value for column '" + name + "'");
      }
      return cells[idx];
    };
    auto real = [&](std::size_t idx, const std::string& name) {
      auto v = parse_real(cell(idx, name));
      if (!v) {
        throw std::runtime_error("csv row " + std::to_string(row) + ": column '" + name + "' value '" +
                                 cell(idx, name) + "' is not a finite real");
      }
      return *v;
    };

    Sample s;
    s.x.reserve(feature_idx.size());
    for (std::size_t k = 0; k < feature_idx.size(); ++k) s.x.push_back(real(feature_idx[k], columns.features[k]));
    s.y = real(label_idx, columns.label);
    // An empty ground-truth cell means "unknown", which is how write_csv encodes it.
    if (gt_idx && !cell(*gt_idx, *columns.ground_truth).empty()) s.y_gt = real(*gt_idx, *columns.ground_truth);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw std::runtime_error("csv file '" + path.string() + "' has no data rows");
  return Dataset(std::move(samples));
}

void write_csv(const Dataset& ds, std::ostream& out) {
  for (std::size_t k = 0; k < ds.dim(); ++k) out << 'x' << k << ',';
  out << "y,y_gt,noisy\n";
  for (const Sample& s : ds.samples()) {
    for (double v : s.x) out << format_double(v) << ',';
    out << format_double(s.y) << ',';
    if (s.y_gt) out << format_double(*s.y_gt);
    out << ',' << ((s.y_gt && *s.y_gt != s.y) ? 1 : 0) << '\n';
  }
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv file '" + path.string() + "'");
  write_csv(ds, out);
}

void write_jsonl(const Dataset& ds, std::ostream& out) {
  for (const Sample& s : ds.samples()) {
    out << "{\"x\":[";
    for (std::size_t k = 0; k < s.x.size(); ++k) out << (k ? "," : "") << format_double(s.x[k]);
    out << "],\"y\":" << format_double(s.y) << ",\"y_gt\":" << (s.y_gt ? format_double(*s.y_gt) : "null")
        << ",\"noisy\":" << ((s.y_gt && *s.y_gt != s.y) ? "true" : "false") << "}\n";
  }
}

std::vector<double> feature_map(double t, std::size_t d) {
  std::vector<double> phi(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double m = static_cast<double>(k / 4 + 1);
    switch (k % 4) {
      case 0: phi[k] = std::pow(t, m); break;
      case 1: phi[k] = std::sin(2.0 * std::numbers::pi * m * t) / 4.0; break;
      case 2: phi[k] = std::cos(2.0 * std::numbers::pi * m * t) / 4.0; break;
      default: phi[k] = std::pow(t, m + 1.0); break;
    }
  }
  return phi;
}

Dataset generate_synthetic(std::size_t n, std::size_t d, double label_lo, double label_hi,
                           double feature_noise_std, std::uint64_t seed) {
  // A single sample cannot span a non-empty label range.
  if (n < 2) throw std::invalid_argument("synthetic n must be at least 2");
  if (d == 0) throw std::invalid_argument("synthetic d must be at least 1");
  if (!(label_hi > label_lo) || !std::isfinite(label_lo) || !std::isfinite(label_hi)) {
    throw std::invalid_argument("synthetic label bounds must satisfy label_lo < label_hi");
  }
  if (!(feature_noise_std >= 0.0) || !std::isfinite(feature_noise_std)) {
    throw std::invalid_argument("synthetic feature_noise_std must be >= 0");
  }
  std::vector<Sample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, Stream::synthetic, {i}));
    const double t = rng.uniform();
    Sample& s = samples[i];
    s.y_gt = label_lo + t * (label_hi - label_lo);
    s.y = *s.y_gt;
    s.x = feature_map(t, d);
    if (feature_noise_std > 0.0) {
      for (double& v : s.x) v += feature_noise_std * rng.normal();
    }
  }
  return Dataset(std::move(samples));
}

namespace {

std::vector<Sample> with_ground_truth(const Dataset& ds) {
  std::vector<Sample> samples = ds.samples();
  for (Sample& s : samples) {
    if (!s.y_gt) s.y_gt = s.y;
  }
  return samples;
}

}  // namespace

Dataset inject_symmetric_noise(const Dataset& ds, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("symmetric noise rate must lie in [0, 1]");
  const double lo = ds.label_min();
  const double hi = ds.label_max();
  std::vector<Sample> samples = with_ground_truth(ds);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(derive_seed(seed, Stream::symmetric_noise, {i}));
    const double u = rng.uniform();
    const double replacement = rng.uniform(lo, hi);
    samples[i].y = u < rate ? replacement : *samples[i].y_gt;
  }
  return Dataset(std::move(samples));
}

Dataset inject_gaussian_noise(const Dataset& ds, double max_std_frac, std::uint64_t seed) {
  if (!(max_std_frac > 0.0 && max_std_frac <= 1.0)) {
    throw std::invalid_argument("gaussian noise max_std_frac must lie in (0, 1]");
  }
  const double lo = ds.label_min();
  const double hi = ds.label_max();
  std::vector<Sample> samples = with_ground_truth(ds);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(derive_seed(seed, Stream::gaussian_noise, {i}));
    const double sigma = rng.uniform(0.0, max_std_frac * (hi - lo));
    samples[i].y = std::clamp(*samples[i].y_gt + sigma * rng.normal(), lo, hi);
  }
  return Dataset(std::move(samples));
}

Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec) {
  spec.validate();
  return spec.kind == NoiseKind::symmetric ? inject_symmetric_noise(ds, spec.rate, spec.seed)
                                           : inject_gaussian_noise(ds, spec.max_std_frac, spec.seed);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.size();
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, Stream::split));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

}  // namespace confrag
