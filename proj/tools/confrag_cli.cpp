#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "confrag/config.hpp"
#include "confrag/data.hpp"
#include "confrag/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutputRootEnv = "CONFRAG_OUTPUT_ROOT";

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Experiment flags shared by run / compare-pairings / reference. Each one
// overrides the matching key of the JSON config before strict validation.
struct ConfigFlags {
  std::string config_path;
  std::optional<int> fragments;
  std::optional<double> jitter;
  std::optional<std::size_t> knn_k;
  std::optional<std::size_t> epochs;
  std::optional<double> expert_lr;
  std::optional<double> regressor_lr;
  std::optional<std::string> lr_schedule;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> train_fraction;
  std::optional<std::string> pairing;
  std::optional<std::string> mode;
  std::optional<std::string> combine;
  std::optional<std::string> noise_kind;
  std::optional<double> noise_rate;
  std::optional<double> noise_max_std_frac;
  std::optional<std::uint64_t> noise_seed;
  std::optional<std::string> expert_hidden;
  std::optional<std::string> regressor_hidden;
  std::optional<std::string> csv_path;
  std::optional<std::string> csv_features;
  std::optional<std::string> csv_label;
  std::optional<std::string> csv_gt;
  std::optional<std::size_t> syn_n;
  std::optional<std::size_t> syn_d;
  std::optional<double> syn_feature_noise;
  std::optional<std::uint64_t> syn_seed;
  bool no_selection_dump = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON experiment config");
    app->add_option("--F", fragments, "fragment count (even, 4..12)");
    app->add_option("--J", jitter, "jitter buffer ratio of the label range");
    app->add_option("--K", knn_k, "K for the nearest-neighbor agreement (odd)");
    app->add_option("--epochs", epochs);
    app->add_option("--expert-lr", expert_lr);
    app->add_option("--regressor-lr", regressor_lr);
    app->add_option("--lr-schedule", lr_schedule, "constant | cosine");
    app->add_option("--batch-size", batch_size);
    app->add_option("--seed", seed);
    app->add_option("--train-fraction", train_fraction);
    app->add_option("--pairing", pairing, "pairing override, e.g. 1-3,2-4");
    app->add_option("--mode", mode, "confrag | confrag_r | vanilla");
    app->add_option("--combine", combine, "union | intersection | pred_only | repr_only");
    app->add_option("--noise-kind", noise_kind, "none | symmetric | gaussian");
    app->add_option("--noise-rate", noise_rate);
    app->add_option("--noise-max-std-frac", noise_max_std_frac);
    app->add_option("--noise-seed", noise_seed);
    app->add_option("--expert-hidden", expert_hidden, "comma-separated hidden widths");
    app->add_option("--regressor-hidden", regressor_hidden, "comma-separated hidden widths");
    app->add_option("--csv", csv_path, "train from a CSV file instead of synthetic data");
    app->add_option("--features", csv_features, "comma-separated CSV feature columns");
    app->add_option("--label", csv_label, "CSV label column");
    app->add_option("--gt", csv_gt, "CSV ground-truth column");
    app->add_option("--n", syn_n, "synthetic sample count");
    app->add_option("--d", syn_d, "synthetic feature dimension");
    app->add_option("--feature-noise", syn_feature_noise, "synthetic feature noise std");
    app->add_option("--data-seed", syn_seed, "synthetic data seed");
    app->add_flag("--no-selection-dump", no_selection_dump, "skip per-epoch selection JSONL");
  }

  confrag::ExperimentConfig resolve() const {
    json j = config_path.empty() ? json(confrag::to_json(confrag::ExperimentConfig{}))
                                 : json::parse(std::ifstream(config_path), nullptr, true);
    if (j.is_discarded()) throw std::invalid_argument("config '" + config_path + "' is not valid JSON");
    auto set = [&](const char* key, const auto& value) {
      if (value) j[key] = *value;
    };
    set("F", fragments);
    set("J", jitter);
    set("K", knn_k);
    set("epochs", epochs);
    set("expert_lr", expert_lr);
    set("regressor_lr", regressor_lr);
    set("lr_schedule", lr_schedule);
    set("batch_size", batch_size);
    set("seed", seed);
    set("train_fraction", train_fraction);
    set("pairing_override", pairing);
    set("mode", mode);
    set("selection_combine", combine);
    if (no_selection_dump) j["write_selection"] = false;
    auto hidden = [](const std::string& text) {
      std::vector<std::size_t> out;
      for (const auto& item : split_list(text, ',')) out.push_back(std::stoul(item));
      return out;
    };
    if (expert_hidden) j["expert_net"]["hidden"] = hidden(*expert_hidden);
    if (regressor_hidden) j["regressor_net"]["hidden"] = hidden(*regressor_hidden);

    if (noise_kind && *noise_kind == "none") {
      j["noise"] = nullptr;
    } else if (noise_kind || noise_rate || noise_max_std_frac || noise_seed) {
      json n = j.contains("noise") && j["noise"].is_object() ? j["noise"] : json::object();
      if (noise_kind) n["kind"] = *noise_kind;
      if (noise_rate) n["rate"] = *noise_rate;
      if (noise_max_std_frac) n["max_std_frac"] = *noise_max_std_frac;
      if (noise_seed) n["seed"] = *noise_seed;
      j["noise"] = n;
    }

    if (csv_path) {
      json c{{"path", *csv_path}, {"label_col", csv_label.value_or("y")}};
      c["feature_cols"] = csv_features ? split_list(*csv_features, ',') : std::vector<std::string>{};
      if (csv_gt) c["gt_col"] = *csv_gt;
      j["data"] = json{{"csv", c}};
    } else if (syn_n || syn_d || syn_feature_noise || syn_seed) {
      if (!j["data"].contains("synthetic")) j["data"] = json{{"synthetic", json::object()}};
      json& s = j["data"]["synthetic"];
      if (syn_n) s["n"] = *syn_n;
      if (syn_d) s["d"] = *syn_d;
      if (syn_feature_noise) s["feature_noise_std"] = *syn_feature_noise;
      if (syn_seed) s["seed"] = *syn_seed;
    }
    return confrag::config_from_json(j);
  }
};

fs::path default_output_dir(const confrag::ExperimentConfig& cfg, const std::string& prefix) {
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / (prefix + "-" + confrag::config_hash(cfg));
}

confrag::CsvColumns csv_columns(const std::string& path, const std::string& features, const std::string& label,
                                const std::string& gt) {
  confrag::CsvColumns cols;
  cols.label = label;
  if (!gt.empty()) cols.ground_truth = gt;
  if (!features.empty()) {
    cols.features = split_list(features, ',');
    return cols;
  }
  // Default: every column except the label, ground truth and noisy flag.
  std::ifstream in(path);
  std::string header;
  if (!in || !std::getline(in, header)) throw std::runtime_error("cannot read header of '" + path + "'");
  for (auto& name : split_list(header, ',')) {
    while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
    if (name != label && name != gt && name != "noisy") cols.features.push_back(name);
  }
  return cols;
}

int run_report(const fs::path& run_dir) {
  std::ifstream in(run_dir / confrag::kMetricsFile);
  if (!in) throw std::runtime_error("no metrics found in '" + run_dir.string() + "'");
  std::string line;
  std::vector<json> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  if (rows.empty()) throw std::runtime_error("metrics file in '" + run_dir.string() + "' is empty");
  std::cout << "epoch,mae,mrae_percent,selection_rate,err\n";
  auto cell = [](const json& v) { return v.is_null() ? std::string() : v.dump(); };
  for (const json& r : rows) {
    std::cout << r["epoch"] << ',' << cell(r["mae"]) << ',' << cell(r["mrae_percent"]) << ','
              << cell(r["selection_rate"]) << ',' << cell(r["err"]) << '\n';
  }
  std::ifstream summary(run_dir / confrag::kSummaryFile);
  if (summary) std::cerr << "\nsummary:\n" << summary.rdbuf();
  return 0;
}

// Creates missing parent directories; throws if the file cannot be written.
void open_output(std::ofstream& file, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  file.open(path);
  if (!file) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample selection for regression with noisy labels via contrastive fragment pairing"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  std::size_t gen_n = 2000, gen_d = 2;
  double gen_lo = 0.0, gen_hi = 100.0, gen_noise = 0.05;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_format = "csv";
  gen->add_option("--n", gen_n);
  gen->add_option("--d", gen_d);
  gen->add_option("--lo", gen_lo);
  gen->add_option("--hi", gen_hi);
  gen->add_option("--feature-noise", gen_noise);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--format", gen_format)->check(CLI::IsMember({"csv", "jsonl"}));
  gen->add_option("--out", gen_out, "output file (stdout if omitted)");

  auto* inj = app.add_subcommand("inject-noise", "corrupt the labels of a CSV dataset");
  std::string inj_in, inj_out, inj_kind = "symmetric", inj_features, inj_label = "y", inj_gt = "y_gt";
  double inj_rate = 0.0, inj_std = 0.3;
  std::uint64_t inj_seed = 0;
  inj->add_option("--in", inj_in)->required();
  inj->add_option("--out", inj_out, "output file (stdout if omitted)");
  inj->add_option("--kind", inj_kind)->check(CLI::IsMember({"symmetric", "gaussian"}));
  inj->add_option("--rate", inj_rate);
  inj->add_option("--max-std-frac", inj_std);
  inj->add_option("--seed", inj_seed);
  inj->add_option("--features", inj_features, "comma-separated feature columns (default: all others)");
  inj->add_option("--label", inj_label);
  inj->add_option("--gt", inj_gt, "ground-truth column, empty for none");

  ConfigFlags run_flags;
  std::string run_out;
  bool run_no_reference = false;
  auto* run = app.add_subcommand("run", "run one experiment");
  run_flags.attach(run);
  run->add_option("--out", run_out, "output directory (default $CONFRAG_OUTPUT_ROOT/run-<hash>)");
  run->add_flag("--no-reference", run_no_reference, "skip the noise-free reference run (no MRAE)");

  ConfigFlags cmp_flags;
  std::string cmp_pairings, cmp_out;
  auto* cmp = app.add_subcommand("compare-pairings", "run one experiment per pairing");
  cmp_flags.attach(cmp);
  cmp->add_option("--pairings", cmp_pairings, "pairings separated by ';', e.g. \"1-3,2-4;1-2,3-4\"")->required();
  cmp->add_option("--out", cmp_out, "CSV output file (stdout if omitted)");

  ConfigFlags ref_flags;
  auto* ref = app.add_subcommand("reference", "noise-free reference MAE");
  ref_flags.attach(ref);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "print the per-epoch metrics of a run");
  report->add_option("run_dir", report_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto ds = confrag::generate_synthetic(gen_n, gen_d, gen_lo, gen_hi, gen_noise, gen_seed);
      std::ofstream file;
      if (!gen_out.empty()) open_output(file, gen_out);
      std::ostream& out = gen_out.empty() ? std::cout : file;
      if (gen_format == "csv") {
        confrag::write_csv(ds, out);
      } else {
        confrag::write_jsonl(ds, out);
      }
    } else if (*inj) {
      const auto ds = confrag::load_csv(inj_in, csv_columns(inj_in, inj_features, inj_label, inj_gt));
      const auto spec = inj_kind == "symmetric" ? confrag::NoiseSpec::symmetric(inj_rate, inj_seed)
                                                : confrag::NoiseSpec::gaussian(inj_std, inj_seed);
      const auto noisy = confrag::inject_noise(ds, spec);
      std::ofstream file;
      if (!inj_out.empty()) open_output(file, inj_out);
      confrag::write_csv(noisy, inj_out.empty() ? std::cout : file);
    } else if (*run) {
      const auto cfg = run_flags.resolve();
      const fs::path out = run_out.empty() ? default_output_dir(cfg, "run") : fs::path(run_out);
      confrag::RunOptions options;
      options.output_dir = out;
      if (!run_no_reference) options.rho = confrag::run_noise_free_reference(cfg);
      const auto result = confrag::run_experiment(cfg, options);
      const auto& fin = result.final_metrics();
      std::cout << "output: " << out.string() << '\n' << confrag::to_json_line(fin) << '\n';
    } else if (*cmp) {
      const auto cfg = cmp_flags.resolve();
      std::vector<confrag::Matching> pairings;
      for (const auto& text : split_list(cmp_pairings, ';')) pairings.push_back(confrag::parse_matching(text));
      const auto rows = confrag::compare_pairings(cfg, pairings);
      std::ofstream file;
      if (!cmp_out.empty()) open_output(file, cmp_out);
      confrag::write_comparison_csv(rows, cmp_out.empty() ? std::cout : file);
    } else if (*ref) {
      std::cout << confrag::run_noise_free_reference(ref_flags.resolve()) << '\n';
    } else if (*report) {
      return run_report(report_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
