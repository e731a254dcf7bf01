#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "confrag/data.hpp"
#include "confrag/fragmentation.hpp"
#include "confrag/netcore.hpp"

namespace confrag {

// classifier: one logit per expert, positive means "lower-indexed fragment of
// the pair". regressor: mse on the label normalized to [0, 1] over the
// training range (used by the regression-agreement variant).
enum class ExpertKind { classifier, regressor };

// One expert per contrastive pair, indexed like pairing.pairs(). All experts
// share the architecture of `spec`; expert p is initialized from a seed
// derived from spec.seed and p.
struct ExpertEnsemble {
  ContrastivePairing pairing;
  NetSpec spec;
  ExpertKind kind = ExpertKind::classifier;
  double label_lo = 0.0;
  double label_range = 1.0;
  std::vector<Net> experts;

  const Net& expert(FragmentId a, FragmentId b) const { return experts.at(pairing.pair_index(a, b)); }
};

ExpertEnsemble make_ensemble(const ContrastivePairing& pairing, NetSpec spec, ExpertKind kind, double label_lo,
                             double label_hi);

// n x d matrix of the dataset's features.
Eigen::MatrixXd feature_matrix(const Dataset& ds);

struct ExpertTrainingSet {
  std::vector<std::size_t> samples;
  std::vector<FragmentId> fragments;
};

// Samples whose observed label lies in either jittered member of pair p. A
// sample covered by both members appears twice, once per fragment.
ExpertTrainingSet expert_training_set(const Dataset& ds, const JitteredScheme& js, const FragmentPair& pair);

// One epoch of shuffled mini-batch descent per expert. Returns the mean
// pre-step loss of each expert.
std::vector<double> train_experts_epoch(ExpertEnsemble& ens, const Dataset& ds, const JitteredScheme& js, double lr,
                                        std::size_t batch_size, std::uint64_t seed);

// Logit > 0 gives the lower-indexed fragment a; anything else (including an
// exact zero) gives b.
FragmentId classify_pair(const ExpertEnsemble& ens, const FragmentPair& pair, std::span<const double> x);
FragmentId classify_logit(const FragmentPair& pair, double logit);

// Regression expert output mapped back to label units.
double expert_regression(const ExpertEnsemble& ens, const FragmentPair& pair, std::span<const double> x);

struct ExpertBank {
  Eigen::MatrixXd features;  // one row per entry
  std::vector<FragmentId> fragments;
  std::vector<std::size_t> samples;

  std::size_t size() const { return fragments.size(); }
};

struct FeatureBank {
  ContrastivePairing pairing;
  std::vector<ExpertBank> experts;

  const ExpertBank& bank(const FragmentPair& pair) const { return experts.at(pairing.pair_index(pair.first, pair.second)); }
};

// Features of every sample under every expert, indexed by pair.
std::vector<Eigen::MatrixXd> expert_features(const ExpertEnsemble& ens, const Eigen::MatrixXd& inputs);

FeatureBank build_feature_bank(const ExpertEnsemble& ens, const Dataset& ds, const JitteredScheme& js);
FeatureBank build_feature_bank(const ExpertEnsemble& ens, const Dataset& ds, const JitteredScheme& js,
                               const std::vector<Eigen::MatrixXd>& features);

// Majority vote of the K nearest (Euclidean) bank entries. Distance ties go
// to the lower bank index. K larger than the bank uses the whole bank and
// warns.
FragmentId knn_classify(const FeatureBank& bank, const FragmentPair& pair, const Eigen::Ref<const Eigen::VectorXd>& feature,
                        std::size_t K);
FragmentId knn_classify(const ExpertBank& bank, const FragmentPair& pair, const Eigen::Ref<const Eigen::VectorXd>& feature,
                        std::size_t K);

void save_ensemble(const ExpertEnsemble& ens, const std::filesystem::path& dir);
ExpertEnsemble load_ensemble(const std::filesystem::path& dir);

}  // namespace confrag
