#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "confrag/config.hpp"

using namespace confrag;
using nlohmann::json;

namespace {

std::string error_for(const json& j) {
  try {
    config_from_json(j);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return "";
}

json defaults() { return json::parse(to_json(ExperimentConfig{}).dump()); }

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  ExperimentConfig cfg;
  cfg.noise = NoiseSpec::symmetric(0.4, 3);
  cfg.pairing_override = parse_matching("1-2,3-4");
  const json j = json::parse(to_json(cfg).dump());
  ExperimentConfig back = config_from_json(j);
  EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 16u);
}

TEST(Config, EmptyObjectGivesDefaults) {
  ExperimentConfig cfg = config_from_json(json::object());
  EXPECT_EQ(cfg.fragments, 4);
  EXPECT_EQ(cfg.jitter, 0.05);
  EXPECT_EQ(cfg.knn_k, 5u);
  EXPECT_EQ(cfg.mode, Mode::confrag);
  EXPECT_EQ(cfg.selection_combine, SelectionCombine::union_set);
  EXPECT_FALSE(cfg.noise.has_value());
}

TEST(Config, HashChangesWithAnyField) {
  ExperimentConfig a, b;
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, UnknownKeysAreNamed) {
  EXPECT_NE(error_for(json{{"bogus", 1}}).find("'bogus'"), std::string::npos);
  json nested = {{"noise", {{"kind", "symmetric"}, {"rte", 0.4}}}};
  EXPECT_NE(error_for(nested).find("'noise.rte'"), std::string::npos);
  json data = {{"data", {{"synthetic", {{"size", 10}}}}}};
  EXPECT_NE(error_for(data).find("'data.synthetic.size'"), std::string::npos);
}

TEST(Config, InvariantViolationsNameTheField) {
  struct Case {
    const char* key;
    json value;
    const char* field;
  };
  const Case cases[] = {
      {"F", 5, "F"},
      {"F", 14, "F"},
      {"J", 0.2, "J"},
      {"J", -0.1, "J"},
      {"K", 4, "K"},
      {"epochs", 0, "epochs"},
      {"expert_lr", 0.0, "expert_lr"},
      {"batch_size", 0, "batch_size"},
      {"train_fraction", 1.0, "train_fraction"},
      {"mode", "ensemble", "mode"},
      {"selection_combine", "both", "selection_combine"},
      {"lr_schedule", "step", "lr_schedule"},
      {"pairing_override", "1-2,2-3", "pairing_override"},
  };
  for (const Case& c : cases) {
    json j = defaults();
    j[c.key] = c.value;
    std::string msg = error_for(j);
    EXPECT_NE(msg.find(c.field), std::string::npos) << c.key << ": " << msg;
  }
  json noise = defaults();
  noise["noise"] = {{"kind", "symmetric"}, {"rate", 1.5}};
  EXPECT_NE(error_for(noise).find("noise"), std::string::npos);
  json wrong_type = defaults();
  wrong_type["K"] = "five";
  EXPECT_NE(error_for(wrong_type).find("'K'"), std::string::npos);
}

TEST(Config, JitterBoundDependsOnF) {
  json j = defaults();
  j["F"] = 12;
  j["J"] = 0.05;  // 1/22 < 0.05
  EXPECT_NE(error_for(j).find("J"), std::string::npos);
  j["J"] = 0.04;
  EXPECT_NO_THROW(config_from_json(j));
}

TEST(Config, PairingOverrideForms) {
  json j = defaults();
  j["pairing_override"] = "(1,2),(3,4)";
  EXPECT_EQ(*config_from_json(j).pairing_override, (Matching{{0, 1}, {2, 3}}));
  j["pairing_override"] = json::array({json::array({4, 1}), json::array({2, 3})});
  EXPECT_EQ(*config_from_json(j).pairing_override, (Matching{{0, 3}, {1, 2}}));
}

TEST(Config, CsvSourceRequiresFeatures) {
  json j = defaults();
  j["data"] = {{"csv", {{"path", "x.csv"}, {"feature_cols", json::array()}}}};
  EXPECT_NE(error_for(j).find("feature_cols"), std::string::npos);
  j["data"] = {{"csv", {{"path", "x.csv"}, {"feature_cols", {"a"}}, {"gt_col", "g"}}}};
  ExperimentConfig cfg = config_from_json(j);
  EXPECT_EQ(std::get<CsvSource>(cfg.source).gt_col, std::optional<std::string>("g"));
}

TEST(LrSchedule, CosineDecaysFromOne) {
  EXPECT_EQ(lr_factor(LrSchedule::constant, 7, 10), 1.0);
  EXPECT_EQ(lr_factor(LrSchedule::cosine, 1, 100), 1.0);
  EXPECT_NEAR(lr_factor(LrSchedule::cosine, 51, 100), 0.5, 1e-12);
  double prev = 2.0;
  for (std::size_t e = 1; e <= 100; ++e) {
    double f = lr_factor(LrSchedule::cosine, e, 100);
    EXPECT_LT(f, prev);
    EXPECT_GT(f, 0.0);
    prev = f;
  }
}
