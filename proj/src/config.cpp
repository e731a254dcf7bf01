#include "confrag/config.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <fstream>
#include <set>
#include <stdexcept>

namespace confrag {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::confrag: return "confrag";
    case Mode::confrag_r: return "confrag_r";
    case Mode::vanilla: return "vanilla";
  }
  return "confrag";
}

Mode mode_from_string(const std::string& name) {
  if (name == "confrag") return Mode::confrag;
  if (name == "confrag_r") return Mode::confrag_r;
  if (name == "vanilla") return Mode::vanilla;
  throw std::invalid_argument("mode: unknown value '" + name + "'");
}

std::string to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule lr_schedule_from_string(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("lr_schedule: unknown value '" + name + "'");
}

double lr_factor(LrSchedule schedule, std::size_t epoch, std::size_t epochs) {
  if (schedule == LrSchedule::constant) return 1.0;
  const double progress = static_cast<double>(epoch - 1) / static_cast<double>(epochs);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void ExperimentConfig::validate() const {
  if (const auto* syn = std::get_if<SyntheticSource>(&source)) {
    if (syn->n < 2) throw std::invalid_argument("data.synthetic.n must be >= 2");
    if (syn->d < 1) throw std::invalid_argument("data.synthetic.d must be >= 1");
    if (!(syn->label_hi > syn->label_lo)) throw std::invalid_argument("data.synthetic.label_hi must exceed label_lo");
    if (!(syn->feature_noise_std >= 0.0)) throw std::invalid_argument("data.synthetic.feature_noise_std must be >= 0");
  } else {
    const auto& csv = std::get<CsvSource>(source);
    if (csv.path.empty()) throw std::invalid_argument("data.csv.path must be set");
    if (csv.feature_cols.empty()) throw std::invalid_argument("data.csv.feature_cols must not be empty");
    if (csv.label_col.empty()) throw std::invalid_argument("data.csv.label_col must be set");
  }
  if (noise) {
    try {
      noise->validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("noise: ") + e.what());
    }
  }
  if (fragments % 2 != 0 || fragments < kMinFragments || fragments > kMaxFragments) {
    throw std::invalid_argument("F must be even and lie in [4, 12]");
  }
  if (!(jitter >= 0.0 && jitter <= max_jitter(fragments))) {
    throw std::invalid_argument("J must lie in [0, 1/(2(F-1))] = [0, " + std::to_string(max_jitter(fragments)) + "]");
  }
  if (knn_k == 0 || knn_k % 2 == 0) throw std::invalid_argument("K must be odd and >= 1");
  auto check_net = [](const NetConfig& n, const std::string& field) {
    if (n.hidden.empty()) throw std::invalid_argument(field + ".hidden must list at least one layer");
    for (std::size_t h : n.hidden) {
      if (h == 0) throw std::invalid_argument(field + ".hidden entries must be >= 1");
    }
  };
  check_net(expert_net, "expert_net");
  check_net(regressor_net, "regressor_net");
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (!(expert_lr > 0.0)) throw std::invalid_argument("expert_lr must be > 0");
  if (!(regressor_lr > 0.0)) throw std::invalid_argument("regressor_lr must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must lie in (0, 1)");
  if (pairing_override) {
    try {
      ContrastivePairing(*pairing_override, fragments);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("pairing_override: ") + e.what());
    }
  }
}

namespace {

ordered_json net_to_json(const NetConfig& n) {
  return ordered_json{{"hidden", n.hidden}, {"activation", to_string(n.activation)}};
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw std::invalid_argument("unknown config key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config key '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type");
  }
}

NetConfig net_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"hidden", "activation"});
  NetConfig n;
  read(j, "hidden", n.hidden, where);
  std::string act = to_string(n.activation);
  read(j, "activation", act, where);
  try {
    n.activation = activation_from_string(act);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument(where + ".activation: unknown value '" + act + "'");
  }
  return n;
}

}  // namespace

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  ordered_json data;
  if (const auto* syn = std::get_if<SyntheticSource>(&cfg.source)) {
    data["synthetic"] = {{"n", syn->n},
                         {"d", syn->d},
                         {"label_lo", syn->label_lo},
                         {"label_hi", syn->label_hi},
                         {"feature_noise_std", syn->feature_noise_std},
                         {"seed", syn->seed}};
  } else {
    const auto& csv = std::get<CsvSource>(cfg.source);
    ordered_json c{{"path", csv.path}, {"feature_cols", csv.feature_cols}, {"label_col", csv.label_col}};
    c["gt_col"] = csv.gt_col ? ordered_json(*csv.gt_col) : ordered_json(nullptr);
    data["csv"] = c;
  }
  j["data"] = data;
  if (cfg.noise) {
    ordered_json n{{"kind", to_string(cfg.noise->kind)}};
    if (cfg.noise->kind == NoiseKind::symmetric) {
      n["rate"] = cfg.noise->rate;
    } else {
      n["max_std_frac"] = cfg.noise->max_std_frac;
    }
    n["seed"] = cfg.noise->seed;
    j["noise"] = n;
  } else {
    j["noise"] = nullptr;
  }
  j["F"] = cfg.fragments;
  j["J"] = cfg.jitter;
  j["K"] = cfg.knn_k;
  j["expert_net"] = net_to_json(cfg.expert_net);
  j["regressor_net"] = net_to_json(cfg.regressor_net);
  j["epochs"] = cfg.epochs;
  j["expert_lr"] = cfg.expert_lr;
  j["regressor_lr"] = cfg.regressor_lr;
  j["lr_schedule"] = to_string(cfg.lr_schedule);
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["train_fraction"] = cfg.train_fraction;
  j["pairing_override"] = cfg.pairing_override ? ordered_json(to_string(*cfg.pairing_override)) : ordered_json(nullptr);
  j["mode"] = to_string(cfg.mode);
  j["selection_combine"] = to_string(cfg.selection_combine);
  j["write_selection"] = cfg.write_selection;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "",
             {"data", "noise", "F", "J", "K", "expert_net", "regressor_net", "epochs", "expert_lr", "regressor_lr",
              "lr_schedule", "batch_size", "seed", "train_fraction", "pairing_override", "mode", "selection_combine",
              "write_selection"});
  ExperimentConfig cfg;
  if (j.contains("data")) {
    const json& data = j.at("data");
    check_keys(data, "data", {"synthetic", "csv"});
    if (data.contains("synthetic") == data.contains("csv")) {
      throw std::invalid_argument("data must contain exactly one of 'synthetic' or 'csv'");
    }
    if (data.contains("synthetic")) {
      const json& s = data.at("synthetic");
      check_keys(s, "data.synthetic", {"n", "d", "label_lo", "label_hi", "feature_noise_std", "seed"});
      SyntheticSource syn;
      read(s, "n", syn.n, "data.synthetic");
      read(s, "d", syn.d, "data.synthetic");
      read(s, "label_lo", syn.label_lo, "data.synthetic");
      read(s, "label_hi", syn.label_hi, "data.synthetic");
      read(s, "feature_noise_std", syn.feature_noise_std, "data.synthetic");
      read(s, "seed", syn.seed, "data.synthetic");
      cfg.source = syn;
    } else {
      const json& c = data.at("csv");
      check_keys(c, "data.csv", {"path", "feature_cols", "label_col", "gt_col"});
      CsvSource csv;
      read(c, "path", csv.path, "data.csv");
      read(c, "feature_cols", csv.feature_cols, "data.csv");
      read(c, "label_col", csv.label_col, "data.csv");
      if (c.contains("gt_col") && !c.at("gt_col").is_null()) {
        std::string gt;
        read(c, "gt_col", gt, "data.csv");
        csv.gt_col = gt;
      }
      cfg.source = csv;
    }
  }
  if (j.contains("noise") && !j.at("noise").is_null()) {
    const json& n = j.at("noise");
    check_keys(n, "noise", {"kind", "rate", "max_std_frac", "seed"});
    NoiseSpec spec;
    std::string kind = "symmetric";
    read(n, "kind", kind, "noise");
    try {
      spec.kind = noise_kind_from_string(kind);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("noise.kind: unknown value '" + kind + "'");
    }
    read(n, "rate", spec.rate, "noise");
    read(n, "max_std_frac", spec.max_std_frac, "noise");
    read(n, "seed", spec.seed, "noise");
    cfg.noise = spec;
  }
  read(j, "F", cfg.fragments, "");
  read(j, "J", cfg.jitter, "");
  read(j, "K", cfg.knn_k, "");
  if (j.contains("expert_net")) cfg.expert_net = net_from_json(j.at("expert_net"), "expert_net");
  if (j.contains("regressor_net")) cfg.regressor_net = net_from_json(j.at("regressor_net"), "regressor_net");
  read(j, "epochs", cfg.epochs, "");
  read(j, "expert_lr", cfg.expert_lr, "");
  read(j, "regressor_lr", cfg.regressor_lr, "");
  if (j.contains("lr_schedule")) {
    std::string name;
    read(j, "lr_schedule", name, "");
    cfg.lr_schedule = lr_schedule_from_string(name);
  }
  read(j, "batch_size", cfg.batch_size, "");
  read(j, "seed", cfg.seed, "");
  read(j, "train_fraction", cfg.train_fraction, "");
  if (j.contains("pairing_override") && !j.at("pairing_override").is_null()) {
    const json& p = j.at("pairing_override");
    try {
      if (p.is_string()) {
        cfg.pairing_override = parse_matching(p.get<std::string>());
      } else {
        Matching m;
        for (const auto& pair : p) m.emplace_back(pair.at(0).get<int>() - 1, pair.at(1).get<int>() - 1);
        cfg.pairing_override = canonical_matching(m);
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("pairing_override: ") + e.what());
    }
  }
  if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("selection_combine")) {
    try {
      cfg.selection_combine = selection_combine_from_string(j.at("selection_combine").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("selection_combine: ") + e.what());
    }
  }
  read(j, "write_selection", cfg.write_selection, "");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace confrag
