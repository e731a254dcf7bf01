#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "confrag/data.hpp"
#include "confrag/experts.hpp"
#include "confrag/fragmentation.hpp"

namespace confrag {

// Cap on g_f(y) = range / |y - mean_f|, reached when y sits within range/cap
// of a fragment mean.
inline constexpr double kPriorCap = 1e6;

// Softmax over g_f(y) using the base (unjittered) fragment means.
std::vector<double> fragment_prior(double y, const FragmentationScheme& scheme, double g_max = kPriorCap);

// 1 iff the fragment agrees with itself and with at least one existing
// neighbor. Edge fragments only consult their single neighbor.
int neighborhood_agreement(FragmentId f, std::span<const std::uint8_t> self);

struct AgreementVector {
  std::vector<std::uint8_t> self;
  std::vector<std::uint8_t> ngb;
  std::vector<std::uint8_t> combined;  // self * ngb
};
AgreementVector agreement_vector(std::vector<std::uint8_t> self);

int self_agreement_pred(std::span<const double> x, FragmentId f, const ExpertEnsemble& ens);
int self_agreement_repr(std::span<const double> x, FragmentId f, const ExpertEnsemble& ens, const FeatureBank& bank,
                        std::size_t K);
// Regression experts: 1 iff the pair's output is strictly closer to mean_f
// than to the partner's mean.
int self_agreement_regr(std::span<const double> x, FragmentId f, const ExpertEnsemble& ens,
                        const FragmentationScheme& scheme);
int regression_agreement(double output, FragmentId f, FragmentId partner, const FragmentationScheme& scheme);

// sum_f prior_f * alpha_f
double mixture_probability(std::span<const double> prior, std::span<const std::uint8_t> alpha);

enum class AgreementVariant { pred, repr };

// For classifier experts `pred` uses the logit sign; for regressor experts it
// uses the nearest-mean rule. `repr` always uses K-NN on the expert features.
double selection_probability(std::span<const double> x, double y, const ExpertEnsemble& ens, AgreementVariant variant,
                             const FragmentationScheme& scheme, const FeatureBank& bank, std::size_t K);

enum class SelectionCombine { union_set, intersection, pred_only, repr_only };
std::string to_string(SelectionCombine c);
SelectionCombine selection_combine_from_string(const std::string& name);

struct SelectionOutcome {
  std::vector<double> p_pred;
  std::vector<double> p_repr;
  std::vector<std::uint8_t> chosen_pred;
  std::vector<std::uint8_t> chosen_repr;
  std::vector<std::size_t> selected_pred;  // S^p
  std::vector<std::size_t> selected_repr;  // S^r
  std::vector<std::size_t> selected;       // S, combined per `combine`
  SelectionCombine combine = SelectionCombine::union_set;

  std::size_t size() const { return p_pred.size(); }
};

struct SelectionProbabilities {
  std::vector<double> pred;
  std::vector<double> repr;
};

// Batched probabilities for every sample of ds.
SelectionProbabilities selection_probabilities(const Dataset& ds, const ExpertEnsemble& ens,
                                               const FragmentationScheme& scheme, const FeatureBank& bank,
                                               std::size_t K);

// Independent u^p, u^r ~ U(0,1) per sample from a (seed, epoch, index)
// counter stream; a sample enters S^p iff p_pred > u^p (likewise S^r).
SelectionOutcome sample_selection(std::vector<double> p_pred, std::vector<double> p_repr, std::uint64_t seed,
                                  std::uint64_t epoch, SelectionCombine combine = SelectionCombine::union_set);

SelectionOutcome select_clean(const Dataset& ds, const ExpertEnsemble& ens, const FragmentationScheme& scheme,
                              const FeatureBank& bank, std::size_t K, std::uint64_t seed, std::uint64_t epoch,
                              SelectionCombine combine = SelectionCombine::union_set);

void write_selection_jsonl(const SelectionOutcome& outcome, const Dataset& ds, std::ostream& out);

}  // namespace confrag
