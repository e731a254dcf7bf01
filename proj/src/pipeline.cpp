#include "confrag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "confrag/experts.hpp"
#include "confrag/log.hpp"
#include "confrag/random.hpp"
#include "confrag/selection.hpp"

namespace confrag {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

constexpr std::uint64_t kRegressorTag = 0x72656772;
constexpr std::uint64_t kExpertTag = 0x65787074;

Dataset load_source(const ExperimentConfig& cfg) {
  if (const auto* syn = std::get_if<SyntheticSource>(&cfg.source)) {
    return generate_synthetic(syn->n, syn->d, syn->label_lo, syn->label_hi, syn->feature_noise_std, syn->seed);
  }
  const auto& csv = std::get<CsvSource>(cfg.source);
  return load_csv(csv.path, CsvColumns{csv.feature_cols, csv.label_col, csv.gt_col});
}

Dataset standardize(const Dataset& ds, const std::vector<double>& mean, const std::vector<double>& scale) {
  std::vector<Sample> samples = ds.samples();
  for (Sample& s : samples) {
    for (std::size_t k = 0; k < s.x.size(); ++k) s.x[k] = (s.x[k] - mean[k]) / scale[k];
  }
  return Dataset(std::move(samples));
}

PreparedData prepare(const ExperimentConfig& cfg, bool clean_train) {
  Dataset all = load_source(cfg);
  auto [train, test] = split(all, cfg.train_fraction, cfg.seed);
  if (clean_train) {
    if (train.has_ground_truth()) {
      train = train.with_clean_labels();
    } else if (!cfg.noise) {
      throw std::runtime_error("noise-free reference needs ground-truth labels (set data.csv.gt_col or configure noise)");
    }
  } else if (cfg.noise) {
    train = inject_noise(train, *cfg.noise);
  }
  if (test.has_ground_truth()) test = test.with_clean_labels();

  const std::size_t d = train.dim();
  std::vector<double> mean(d, 0.0);
  std::vector<double> scale(d, 0.0);
  for (const Sample& s : train.samples()) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += s.x[k];
  }
  for (double& m : mean) m /= static_cast<double>(train.size());
  for (const Sample& s : train.samples()) {
    for (std::size_t k = 0; k < d; ++k) scale[k] += (s.x[k] - mean[k]) * (s.x[k] - mean[k]);
  }
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(train.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return {standardize(train, mean, scale), standardize(test, mean, scale)};
}

double train_regressor_epoch(Net& net, const MatrixXd& X, const std::vector<double>& targets,
                             const std::vector<std::size_t>& selected, double lr, std::size_t batch_size,
                             std::uint64_t seed) {
  std::vector<std::size_t> order = selected;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  double weighted = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch batch;
    batch.inputs.resize(static_cast<Index>(end - start), X.cols());
    batch.targets.resize(static_cast<Index>(end - start), 1);
    for (std::size_t k = start; k < end; ++k) {
      batch.inputs.row(static_cast<Index>(k - start)) = X.row(static_cast<Index>(order[k]));
      batch.targets(static_cast<Index>(k - start), 0) = targets[order[k]];
    }
    weighted += train_step(net, batch, Loss::mse, lr) * static_cast<double>(end - start);
  }
  return weighted / static_cast<double>(order.size());
}

std::string fmt_optional(const std::optional<double>& v, double scale = 1.0) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", *v * scale);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

template <typename Fn>
auto stage(std::size_t epoch, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error("epoch " + std::to_string(epoch) + ", " + name + ": " + e.what());
  }
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) { return prepare(cfg, false); }

std::string to_json_line(const EpochRecord& record) {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(to_json_line(record.metrics));
  j["selected"] = record.selected;
  j["selected_pred"] = record.selected_pred;
  j["selected_repr"] = record.selected_repr;
  j["jitter_delta"] = record.jitter_delta;
  j["expert_loss"] = record.expert_loss;
  j["regressor_loss"] =
      record.regressor_loss ? nlohmann::ordered_json(*record.regressor_loss) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

namespace {

RunResult run_impl(const ExperimentConfig& cfg, const RunOptions& options, bool clean_train) {
  cfg.validate();
  PreparedData data = prepare(cfg, clean_train);
  const Dataset& train = data.train;
  const Dataset& test = data.test;
  const MatrixXd X_train = feature_matrix(train);
  const MatrixXd X_test = feature_matrix(test);
  const std::vector<double> test_labels = test.labels();
  const double lo = train.label_min();
  const double range = train.label_range();
  std::vector<double> targets;
  for (const Sample& s : train.samples()) targets.push_back((s.y - lo) / range);
  const bool has_gt = train.has_ground_truth();

  const NetSpec reg_spec{train.dim(), cfg.regressor_net.hidden, 1, cfg.regressor_net.activation,
                         derive_seed(cfg.seed, {kRegressorTag})};
  RunResult result{cfg, std::nullopt, std::nullopt, {}, {}, train, net_init(reg_spec)};

  std::optional<ExpertEnsemble> ens;
  if (cfg.mode != Mode::vanilla) {
    result.scheme = fragment_labels(train, cfg.fragments);
    const Eigen::MatrixXd weights = fragment_edge_weights(train, *result.scheme);
    result.pairing = cfg.pairing_override ? ContrastivePairing(*cfg.pairing_override, cfg.fragments)
                                          : select_contrastive_pairing(weights);
    const NetSpec ex_spec{train.dim(), cfg.expert_net.hidden, 1, cfg.expert_net.activation,
                          derive_seed(cfg.seed, {kExpertTag})};
    ens = make_ensemble(*result.pairing, ex_spec,
                        cfg.mode == Mode::confrag_r ? ExpertKind::regressor : ExpertKind::classifier, lo,
                        train.label_max());
  }

  std::ofstream metrics_out;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    std::ofstream(*options.output_dir / kConfigFile) << to_json(cfg).dump(2) << '\n';
    metrics_out.open(*options.output_dir / kMetricsFile);
    if (!metrics_out) throw std::runtime_error("cannot write metrics to '" + options.output_dir->string() + "'");
    if (cfg.mode != Mode::vanilla && cfg.write_selection) {
      std::filesystem::create_directories(*options.output_dir / "selection");
    }
  }

  std::vector<std::size_t> everyone(train.size());
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr_scale = lr_factor(cfg.lr_schedule, epoch, cfg.epochs);
    EpochRecord rec;
    rec.metrics.epoch = epoch;
    std::vector<std::size_t> selected;
    if (cfg.mode == Mode::vanilla) {
      selected = everyone;
      rec.selected = rec.selected_pred = rec.selected_repr = selected.size();
    } else {
      const JitteredScheme js = stage(epoch, "jitter", [&] { return jitter_scheme(*result.scheme, cfg.jitter, cfg.seed, epoch); });
      rec.jitter_delta = js.delta;
      rec.expert_loss = stage(epoch, "expert training", [&] {
        return train_experts_epoch(*ens, train, js, cfg.expert_lr * lr_scale, cfg.batch_size,
                                   derive_seed(cfg.seed, Stream::expert_shuffle, {epoch}));
      });
      const FeatureBank bank = stage(epoch, "feature bank", [&] { return build_feature_bank(*ens, train, js); });
      SelectionOutcome outcome = stage(epoch, "selection", [&] {
        return select_clean(train, *ens, *result.scheme, bank, cfg.knn_k, cfg.seed, epoch, cfg.selection_combine);
      });
      selected = outcome.selected;
      rec.selected = selected.size();
      rec.selected_pred = outcome.selected_pred.size();
      rec.selected_repr = outcome.selected_repr.size();
      if (options.output_dir && cfg.write_selection) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04zu.jsonl", epoch);
        std::ofstream sel(*options.output_dir / "selection" / name);
        write_selection_jsonl(outcome, train, sel);
      }
    }

    if (selected.empty()) {
      log::warn("epoch " + std::to_string(epoch) + ": no samples selected; skipping regressor training");
    } else {
      rec.regressor_loss = stage(epoch, "regressor training", [&] {
        return train_regressor_epoch(result.regressor, X_train, targets, selected, cfg.regressor_lr * lr_scale, cfg.batch_size,
                                     derive_seed(cfg.seed, Stream::regressor_shuffle, {epoch}));
      });
    }

    const MatrixXd out = forward_batch(result.regressor, X_test).outputs;
    std::vector<double> predictions(static_cast<std::size_t>(out.rows()));
    for (Index i = 0; i < out.rows(); ++i) predictions[static_cast<std::size_t>(i)] = lo + range * out(i, 0);
    rec.metrics.mae = mae(predictions, test_labels);
    if (options.rho) rec.metrics.mrae = mrae(rec.metrics.mae, *options.rho);
    rec.metrics.selection_rate = selection_rate(selected, train);
    if (has_gt) rec.metrics.err = err(selected, train);

    if (metrics_out.is_open()) metrics_out << to_json_line(rec) << '\n';
    result.epochs.push_back(std::move(rec));
    result.final_selection = std::move(selected);
  }

  if (options.output_dir) {
    const auto& dir = *options.output_dir;
    std::filesystem::create_directories(dir / "checkpoints");
    save_net(result.regressor, dir / "checkpoints" / "regressor.json");
    if (ens) save_ensemble(*ens, dir / "checkpoints" / "experts");

    nlohmann::ordered_json scheme;
    if (result.scheme) {
      scheme["F"] = result.scheme->fragments;
      scheme["boundaries"] = result.scheme->boundaries;
      scheme["means"] = result.scheme->means;
      scheme["counts"] = result.scheme->counts;
      scheme["pairing"] = to_string(result.pairing->pairs());
      scheme["pairing_overridden"] = cfg.pairing_override.has_value();
      std::vector<double> deltas;
      for (const auto& r : result.epochs) deltas.push_back(r.jitter_delta);
      scheme["jitter_deltas"] = deltas;
    }
    std::ofstream(dir / kSchemeFile) << scheme.dump(2) << '\n';

    const MetricsReport& fin = result.final_metrics();
    std::ofstream summary(dir / kSummaryFile);
    summary << "config_hash,seed,mode,epochs,pairing,final_mae,final_mrae_percent,final_selection_rate,final_err,rho\n";
    summary << config_hash(cfg) << ',' << cfg.seed << ',' << to_string(cfg.mode) << ',' << cfg.epochs << ",\""
            << (result.pairing ? to_string(result.pairing->pairs()) : std::string()) << "\"," << fmt(fin.mae) << ','
            << fmt_optional(fin.mrae, 100.0) << ',' << fmt(fin.selection_rate) << ',' << fmt_optional(fin.err) << ','
            << fmt_optional(options.rho) << '\n';
  }
  return result;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  return run_impl(cfg, options, false);
}

double run_noise_free_reference(const ExperimentConfig& cfg) {
  ExperimentConfig ref = cfg;
  ref.mode = Mode::vanilla;
  ref.pairing_override.reset();
  // Noise stays configured here so that prepare() can tell whether the
  // observed labels are usable as ground truth; the clean path never injects it.
  return run_impl(ref, {}, true).final_metrics().mae;
}

std::vector<PairingComparisonRow> compare_pairings(const ExperimentConfig& cfg, const std::vector<Matching>& pairings) {
  if (cfg.mode == Mode::vanilla) throw std::invalid_argument("compare_pairings needs mode confrag or confrag_r");
  std::vector<Matching> unique;
  std::set<Matching> seen;
  for (const Matching& m : pairings) {
    const ContrastivePairing checked(m, cfg.fragments);
    if (!seen.insert(checked.pairs()).second) {
      log::warn("duplicate pairing " + to_string(checked.pairs()) + " dropped from the comparison");
      continue;
    }
    unique.push_back(checked.pairs());
  }
  std::vector<PairingComparisonRow> rows;
  for (const Matching& m : unique) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.pairing_override = m;
    run_cfg.write_selection = false;
    const RunResult r = run_experiment(run_cfg);
    rows.push_back({m, r.final_metrics().err, r.final_metrics().selection_rate, r.final_metrics().mae});
  }
  return rows;
}

void write_comparison_csv(const std::vector<PairingComparisonRow>& rows, std::ostream& out) {
  out << "pairing,err,selection_rate,mae\n";
  for (const auto& row : rows) {
    out << '"' << to_string(row.pairing) << "\"," << fmt_optional(row.err) << ',' << fmt(row.selection_rate) << ','
        << fmt(row.mae) << '\n';
  }
}

}  // namespace confrag
