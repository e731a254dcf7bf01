#include "confrag/experts.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "confrag/log.hpp"
#include "confrag/random.hpp"

namespace confrag {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string pair_name(const FragmentPair& pair) {
  return "(" + std::to_string(pair.first + 1) + "," + std::to_string(pair.second + 1) + ")";
}

Eigen::Map<const Eigen::RowVectorXd> as_row(std::span<const double> x) {
  return {x.data(), static_cast<Index>(x.size())};
}

}  // namespace

ExpertEnsemble make_ensemble(const ContrastivePairing& pairing, NetSpec spec, ExpertKind kind, double label_lo,
                             double label_hi) {
  if (!(label_hi > label_lo)) throw std::invalid_argument("expert label range must be non-empty");
  spec.output_dim = 1;
  spec.validate();
  ExpertEnsemble ens{pairing, spec, kind, label_lo, label_hi - label_lo, {}};
  for (std::size_t p = 0; p < pairing.pairs().size(); ++p) {
    NetSpec s = spec;
    s.seed = derive_seed(spec.seed, {p});
    ens.experts.push_back(net_init(s));
  }
  return ens;
}

MatrixXd feature_matrix(const Dataset& ds) {
  MatrixXd X(static_cast<Index>(ds.size()), static_cast<Index>(ds.dim()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    X.row(static_cast<Index>(i)) = as_row(ds[i].x);
  }
  return X;
}

ExpertTrainingSet expert_training_set(const Dataset& ds, const JitteredScheme& js, const FragmentPair& pair) {
  ExpertTrainingSet set;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (FragmentId f : jittered_membership(ds[i].y, js)) {
      if (f == pair.first || f == pair.second) {
        set.samples.push_back(i);
        set.fragments.push_back(f);
      }
    }
  }
  return set;
}

std::vector<double> train_experts_epoch(ExpertEnsemble& ens, const Dataset& ds, const JitteredScheme& js, double lr,
                                        std::size_t batch_size, std::uint64_t seed) {
  if (js.base.fragments != ens.pairing.fragments()) {
    throw std::invalid_argument("jittered scheme and pairing disagree on the fragment count");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  const MatrixXd X = feature_matrix(ds);
  const Loss loss = ens.kind == ExpertKind::classifier ? Loss::bce_logits : Loss::mse;

  std::vector<double> losses;
  for (std::size_t p = 0; p < ens.pairing.pairs().size(); ++p) {
    const FragmentPair pair = ens.pairing.pairs()[p];
    const ExpertTrainingSet set = expert_training_set(ds, js, pair);
    const auto has = [&](FragmentId f) { return std::find(set.fragments.begin(), set.fragments.end(), f) != set.fragments.end(); };
    if (!has(pair.first) || !has(pair.second)) {
      throw std::runtime_error("expert " + pair_name(pair) + " has no training samples for one of its fragments");
    }

    std::vector<std::size_t> order(set.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, Stream::expert_shuffle, {p}));
    rng.shuffle(std::span<std::size_t>(order));

    Net& net = ens.experts[p];
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      Batch batch;
      batch.inputs.resize(static_cast<Index>(end - start), X.cols());
      batch.targets.resize(static_cast<Index>(end - start), 1);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t entry = order[k];
        const std::size_t i = set.samples[entry];
        const auto r = static_cast<Index>(k - start);
        batch.inputs.row(r) = X.row(static_cast<Index>(i));
        if (ens.kind == ExpertKind::classifier) {
          batch.targets(r, 0) = set.fragments[entry] == pair.first ? 1.0 : 0.0;
        } else {
          batch.targets(r, 0) = (ds[i].y - ens.label_lo) / ens.label_range;
        }
      }
      weighted += train_step(net, batch, loss, lr) * static_cast<double>(end - start);
    }
    losses.push_back(weighted / static_cast<double>(order.size()));
  }
  return losses;
}

FragmentId classify_logit(const FragmentPair& pair, double logit) { return logit > 0.0 ? pair.first : pair.second; }

FragmentId classify_pair(const ExpertEnsemble& ens, const FragmentPair& pair, std::span<const double> x) {
  if (ens.kind != ExpertKind::classifier) throw std::logic_error("classify_pair needs classifier experts");
  const FragmentPair ordered{std::min(pair.first, pair.second), std::max(pair.first, pair.second)};
  const Net& net = ens.expert(ordered.first, ordered.second);
  return classify_logit(ordered, net_forward(net, x).output(0));
}

double expert_regression(const ExpertEnsemble& ens, const FragmentPair& pair, std::span<const double> x) {
  if (ens.kind != ExpertKind::regressor) throw std::logic_error("expert_regression needs regressor experts");
  const Net& net = ens.expert(pair.first, pair.second);
  return ens.label_lo + ens.label_range * net_forward(net, x).output(0);
}

std::vector<MatrixXd> expert_features(const ExpertEnsemble& ens, const MatrixXd& inputs) {
  std::vector<MatrixXd> out;
  out.reserve(ens.experts.size());
  for (const Net& net : ens.experts) out.push_back(forward_batch(net, inputs).features);
  return out;
}

FeatureBank build_feature_bank(const ExpertEnsemble& ens, const Dataset& ds, const JitteredScheme& js) {
  return build_feature_bank(ens, ds, js, expert_features(ens, feature_matrix(ds)));
}

FeatureBank build_feature_bank(const ExpertEnsemble& ens, const Dataset& ds, const JitteredScheme& js,
                               const std::vector<MatrixXd>& features) {
  if (features.size() != ens.experts.size()) throw std::invalid_argument("one feature matrix per expert is required");
  FeatureBank bank{ens.pairing, {}};
  for (std::size_t p = 0; p < ens.experts.size(); ++p) {
    const ExpertTrainingSet set = expert_training_set(ds, js, ens.pairing.pairs()[p]);
    ExpertBank eb;
    eb.features.resize(static_cast<Index>(set.samples.size()), features[p].cols());
    for (std::size_t k = 0; k < set.samples.size(); ++k) {
      eb.features.row(static_cast<Index>(k)) = features[p].row(static_cast<Index>(set.samples[k]));
    }
    eb.fragments = set.fragments;
    eb.samples = set.samples;
    bank.experts.push_back(std::move(eb));
  }
  return bank;
}

FragmentId knn_classify(const FeatureBank& bank, const FragmentPair& pair, const Eigen::Ref<const VectorXd>& feature,
                        std::size_t K) {
  return knn_classify(bank.bank(pair), pair, feature, K);
}

FragmentId knn_classify(const ExpertBank& bank, const FragmentPair& pair, const Eigen::Ref<const VectorXd>& feature,
                        std::size_t K) {
  if (K == 0 || K % 2 == 0) throw std::invalid_argument("K must be odd and >= 1, got " + std::to_string(K));
  if (bank.size() == 0) throw std::invalid_argument("feature bank for pair " + pair_name(pair) + " is empty");
  if (feature.size() != bank.features.cols()) throw std::invalid_argument("query feature has the wrong dimension");
  if (K > bank.size()) {
    log::warn("K=" + std::to_string(K) + " exceeds the bank size " + std::to_string(bank.size()) + " for pair " +
              pair_name(pair) + "; using the full bank");
    K = bank.size();
  }
  const VectorXd dist = (bank.features.rowwise() - feature.transpose()).rowwise().squaredNorm();
  std::vector<std::size_t> idx(bank.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto closer = [&](std::size_t a, std::size_t b) {
    const double da = dist(static_cast<Index>(a));
    const double db = dist(static_cast<Index>(b));
    return da < db || (da == db && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(K - 1), idx.end(), closer);
  std::size_t votes_first = 0;
  std::size_t nearest = idx[0];
  for (std::size_t k = 0; k < K; ++k) {
    if (bank.fragments[idx[k]] == pair.first) ++votes_first;
    if (closer(idx[k], nearest)) nearest = idx[k];
  }
  const std::size_t votes_second = K - votes_first;
  if (votes_first != votes_second) return votes_first > votes_second ? pair.first : pair.second;
  // Only reachable when a too-large K was cut down to an even bank size.
  return bank.fragments[nearest];
}

void save_ensemble(const ExpertEnsemble& ens, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["fragments"] = ens.pairing.fragments();
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : ens.pairing.pairs()) pairs.push_back({a + 1, b + 1});
  j["pairing"] = pairs;
  j["kind"] = ens.kind == ExpertKind::classifier ? "classifier" : "regressor";
  j["label_lo"] = ens.label_lo;
  j["label_range"] = ens.label_range;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t p = 0; p < ens.experts.size(); ++p) {
    const std::string name = "expert_" + std::to_string(p) + ".json";
    save_net(ens.experts[p], dir / name);
    files.push_back(name);
  }
  j["experts"] = files;
  j["spec"] = nlohmann::json::parse(net_to_json(ens.experts.front())).at("spec");
  j["spec"]["seed"] = ens.spec.seed;
  std::ofstream out(dir / "pairing.json");
  out << j.dump(2) << '\n';
}

ExpertEnsemble load_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "pairing.json");
  if (!in) throw std::runtime_error("cannot read '" + (dir / "pairing.json").string() + "'");
  const nlohmann::json j = nlohmann::json::parse(in);
  const int F = j.at("fragments").get<int>();
  Matching m;
  for (const auto& p : j.at("pairing")) m.emplace_back(p.at(0).get<int>() - 1, p.at(1).get<int>() - 1);
  ExpertEnsemble ens{ContrastivePairing(m, F), NetSpec{}, ExpertKind::classifier, j.at("label_lo").get<double>(),
                     j.at("label_range").get<double>(), {}};
  ens.kind = j.at("kind").get<std::string>() == "classifier" ? ExpertKind::classifier : ExpertKind::regressor;
  for (const auto& name : j.at("experts")) ens.experts.push_back(load_net(dir / name.get<std::string>()));
  if (ens.experts.size() != ens.pairing.pairs().size()) throw std::runtime_error("checkpoint expert count mismatch");
  ens.spec = ens.experts.front().spec;
  ens.spec.seed = j.at("spec").at("seed").get<std::uint64_t>();
  return ens;
}

}  // namespace confrag
