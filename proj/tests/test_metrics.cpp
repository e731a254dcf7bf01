#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "confrag/data.hpp"
#include "confrag/metrics.hpp"

using namespace confrag;

namespace {

Dataset with_errors(const std::vector<double>& errors) {
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    double gt = static_cast<double>(i);
    samples.push_back(Sample{{gt}, gt + errors[i], gt});
  }
  return Dataset(std::move(samples));
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

TEST(Mae, HandValuesAndErrors) {
  std::vector<double> p = {1, 3}, t = {2, 2};
  EXPECT_EQ(mae(p, t), 1.0);
  EXPECT_EQ(mae(t, t), 0.0);
  std::vector<double> short_v = {1};
  EXPECT_THROW(mae(p, short_v), std::invalid_argument);
}

TEST(Mae, MatchesTwoPassOracle) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z(0.0, 10.0);
  std::vector<double> p(1000), t(1000);
  for (auto& v : p) v = z(gen);
  for (auto& v : t) v = z(gen);
  std::vector<double> diffs;
  for (std::size_t i = 0; i < p.size(); ++i) diffs.push_back(std::abs(p[i] - t[i]));
  double oracle = std::accumulate(diffs.begin(), diffs.end(), 0.0) / 1000.0;
  EXPECT_NEAR(mae(p, t), oracle, 1e-12);
}

TEST(Mrae, RatioMinusOne) {
  EXPECT_EQ(mrae(3.0, 3.0), 0.0);
  EXPECT_NEAR(mrae(1.1264 * 2.0, 2.0), 0.1264, 1e-12);
  EXPECT_LT(mrae(1.0, 2.0), 0.0);
  EXPECT_THROW(mrae(1.0, 0.0), std::invalid_argument);
}

TEST(Err, Identities) {
  Dataset ds = with_errors({0, 0, 4, 4});
  EXPECT_EQ(*err(all_indices(4), ds), 1.0);
  std::vector<std::size_t> clean = {0, 1};
  EXPECT_EQ(*err(clean, ds), 0.0);
  std::vector<std::size_t> mixed = {0, 2};
  EXPECT_EQ(*err(mixed, ds), 1.0);
  std::vector<std::size_t> noisy = {3};
  EXPECT_EQ(*err(noisy, ds), 2.0);
}

TEST(Err, FullSelectionIsExactlyOneOnRandomData) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 17.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> e(101);
    for (auto& v : e) v = u(gen);
    Dataset ds = with_errors(e);
    EXPECT_EQ(*err(all_indices(ds.size()), ds), 1.0);
  }
}

TEST(Err, AbsentCasesAndErrors) {
  Dataset clean = with_errors({0, 0, 0});
  EXPECT_FALSE(err(all_indices(3), clean).has_value());
  Dataset ds = with_errors({0, 1, 2});
  EXPECT_FALSE(err(std::vector<std::size_t>{}, ds).has_value());
  Dataset no_gt({Sample{{0.0}, 1.0, {}}, Sample{{0.0}, 2.0, {}}});
  EXPECT_THROW(err(all_indices(2), no_gt), std::runtime_error);
}

TEST(Err, AffineInvariance) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::bernoulli_distribution coin(0.4);
  std::vector<Sample> base, moved;
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < 500; ++i) {
    double gt = u(gen), y = coin(gen) ? u(gen) : gt;
    base.push_back(Sample{{0.0}, y, gt});
    moved.push_back(Sample{{0.0}, 2 * y + 5, 2 * gt + 5});
    if (i % 3 != 0) picked.push_back(i);
  }
  EXPECT_NEAR(*err(picked, Dataset(base)), *err(picked, Dataset(moved)), 1e-12);
}

TEST(SelectionRate, Bounds) {
  Dataset ds = with_errors({0, 1, 2, 3});
  EXPECT_EQ(selection_rate(all_indices(4), ds), 1.0);
  EXPECT_EQ(selection_rate(std::vector<std::size_t>{}, ds), 0.0);
  EXPECT_EQ(selection_rate(std::vector<std::size_t>{1}, ds), 0.25);
  EXPECT_THROW(selection_rate(std::vector<std::size_t>{4}, ds), std::out_of_range);
}

TEST(Report, JsonLineUsesPercentAndNulls) {
  MetricsReport r;
  r.epoch = 7;
  r.mae = 2.5;
  r.mrae = 0.1264;
  r.selection_rate = 0.5;
  auto j = nlohmann::json::parse(to_json_line(r));
  EXPECT_EQ(j["epoch"], 7);
  EXPECT_NEAR(j["mrae_percent"].get<double>(), 12.64, 1e-12);
  EXPECT_TRUE(j["err"].is_null());
  r.mrae.reset();
  EXPECT_TRUE(nlohmann::json::parse(to_json_line(r))["mrae_percent"].is_null());
}
