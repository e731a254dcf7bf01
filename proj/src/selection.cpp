#include "confrag/selection.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "confrag/log.hpp"
#include "confrag/random.hpp"

namespace confrag {

using Eigen::Index;

std::vector<double> fragment_prior(double y, const FragmentationScheme& scheme, double g_max) {
  const double range = scheme.range();
  const auto F = static_cast<std::size_t>(scheme.fragments);
  std::vector<double> g(F);
  for (std::size_t f = 0; f < F; ++f) {
    const double dist = std::abs(y - scheme.means[f]);
    g[f] = dist * g_max <= range ? g_max : range / dist;
  }
  const double top = *std::max_element(g.begin(), g.end());
  double total = 0.0;
  for (double& v : g) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : g) v /= total;
  return g;
}

int neighborhood_agreement(FragmentId f, std::span<const std::uint8_t> self) {
  const auto F = static_cast<FragmentId>(self.size());
  if (f < 0 || f >= F) throw std::out_of_range("fragment id out of range");
  if (!self[static_cast<std::size_t>(f)]) return 0;
  const bool left = f > 0 && self[static_cast<std::size_t>(f - 1)];
  const bool right = f + 1 < F && self[static_cast<std::size_t>(f + 1)];
  return left || right ? 1 : 0;
}

AgreementVector agreement_vector(std::vector<std::uint8_t> self) {
  AgreementVector a;
  a.self = std::move(self);
  const auto F = static_cast<FragmentId>(a.self.size());
  for (FragmentId f = 0; f < F; ++f) {
    const bool left = f > 0 && a.self[static_cast<std::size_t>(f - 1)];
    const bool right = f + 1 < F && a.self[static_cast<std::size_t>(f + 1)];
    a.ngb.push_back(left || right ? 1 : 0);
    a.combined.push_back(static_cast<std::uint8_t>(neighborhood_agreement(f, a.self)));
  }
  return a;
}

int self_agreement_pred(std::span<const double> x, FragmentId f, const ExpertEnsemble& ens) {
  return classify_pair(ens, {f, ens.pairing.partner(f)}, x) == f ? 1 : 0;
}

int self_agreement_repr(std::span<const double> x, FragmentId f, const ExpertEnsemble& ens, const FeatureBank& bank,
                        std::size_t K) {
  const FragmentId partner = ens.pairing.partner(f);
  const FragmentPair pair{std::min(f, partner), std::max(f, partner)};
  const Eigen::VectorXd feature = net_forward(ens.expert(pair.first, pair.second), x).features;
  return knn_classify(bank, pair, feature, K) == f ? 1 : 0;
}

int regression_agreement(double output, FragmentId f, FragmentId partner, const FragmentationScheme& scheme) {
  const double own = std::abs(scheme.means[static_cast<std::size_t>(f)] - output);
  const double other = std::abs(scheme.means[static_cast<std::size_t>(partner)] - output);
  return own < other ? 1 : 0;
}

int self_agreement_regr(std::span<const double> x, FragmentId f, const ExpertEnsemble& ens,
                        const FragmentationScheme& scheme) {
  const FragmentId partner = ens.pairing.partner(f);
  return regression_agreement(expert_regression(ens, {f, partner}, x), f, partner, scheme);
}

double mixture_probability(std::span<const double> prior, std::span<const std::uint8_t> alpha) {
  if (prior.size() != alpha.size()) throw std::invalid_argument("prior and agreement vectors differ in length");
  double p = 0.0;
  for (std::size_t f = 0; f < prior.size(); ++f) {
    if (alpha[f]) p += prior[f];
  }
  return std::clamp(p, 0.0, 1.0);
}

double selection_probability(std::span<const double> x, double y, const ExpertEnsemble& ens, AgreementVariant variant,
                             const FragmentationScheme& scheme, const FeatureBank& bank, std::size_t K) {
  std::vector<std::uint8_t> self(static_cast<std::size_t>(scheme.fragments));
  for (FragmentId f = 0; f < scheme.fragments; ++f) {
    int agree = 0;
    if (variant == AgreementVariant::repr) {
      agree = self_agreement_repr(x, f, ens, bank, K);
    } else if (ens.kind == ExpertKind::classifier) {
      agree = self_agreement_pred(x, f, ens);
    } else {
      agree = self_agreement_regr(x, f, ens, scheme);
    }
    self[static_cast<std::size_t>(f)] = static_cast<std::uint8_t>(agree);
  }
  const AgreementVector a = agreement_vector(std::move(self));
  return mixture_probability(fragment_prior(y, scheme), a.combined);
}

std::string to_string(SelectionCombine c) {
  switch (c) {
    case SelectionCombine::union_set: return "union";
    case SelectionCombine::intersection: return "intersection";
    case SelectionCombine::pred_only: return "pred_only";
    case SelectionCombine::repr_only: return "repr_only";
  }
  return "union";
}

SelectionCombine selection_combine_from_string(const std::string& name) {
  if (name == "union") return SelectionCombine::union_set;
  if (name == "intersection") return SelectionCombine::intersection;
  if (name == "pred_only") return SelectionCombine::pred_only;
  if (name == "repr_only") return SelectionCombine::repr_only;
  throw std::invalid_argument("unknown selection_combine '" + name + "'");
}

SelectionProbabilities selection_probabilities(const Dataset& ds, const ExpertEnsemble& ens,
                                               const FragmentationScheme& scheme, const FeatureBank& bank,
                                               std::size_t K) {
  if (scheme.fragments != ens.pairing.fragments()) throw std::invalid_argument("scheme and ensemble disagree on F");
  const Eigen::MatrixXd X = feature_matrix(ds);
  const std::size_t P = ens.experts.size();
  std::vector<BatchForward> forwards;
  for (const Net& net : ens.experts) forwards.push_back(forward_batch(net, X));

  // Clamp K once so the per-query search never has to.
  std::vector<std::size_t> k_per_expert(P, K);
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t size = bank.experts.at(p).size();
    if (size == 0) {
      throw std::runtime_error("feature bank for pair " + to_string(Matching{ens.pairing.pairs()[p]}) + " is empty");
    }
    if (K > size) {
      k_per_expert[p] = size % 2 == 1 ? size : size - 1;
      log::warn("K=" + std::to_string(K) + " exceeds the bank size " + std::to_string(size) + " for pair " +
                to_string(Matching{ens.pairing.pairs()[p]}) + "; using K=" + std::to_string(k_per_expert[p]));
    }
  }

  const auto F = static_cast<std::size_t>(scheme.fragments);
  SelectionProbabilities out;
  out.pred.resize(ds.size());
  out.repr.resize(ds.size());
  std::vector<std::uint8_t> self_pred(F);
  std::vector<std::uint8_t> self_repr(F);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = static_cast<Index>(i);
    for (std::size_t p = 0; p < P; ++p) {
      const FragmentPair pair = ens.pairing.pairs()[p];
      const double output = forwards[p].outputs(row, 0);
      for (FragmentId f : {pair.first, pair.second}) {
        const FragmentId partner = f == pair.first ? pair.second : pair.first;
        int agree = 0;
        if (ens.kind == ExpertKind::classifier) {
          agree = classify_logit(pair, output) == f ? 1 : 0;
        } else {
          agree = regression_agreement(ens.label_lo + ens.label_range * output, f, partner, scheme);
        }
        self_pred[static_cast<std::size_t>(f)] = static_cast<std::uint8_t>(agree);
      }
      const FragmentId vote = knn_classify(bank.experts[p], pair, forwards[p].features.row(row).transpose(), k_per_expert[p]);
      self_repr[static_cast<std::size_t>(pair.first)] = vote == pair.first ? 1 : 0;
      self_repr[static_cast<std::size_t>(pair.second)] = vote == pair.second ? 1 : 0;
    }
    const std::vector<double> prior = fragment_prior(ds[i].y, scheme);
    out.pred[i] = mixture_probability(prior, agreement_vector(self_pred).combined);
    out.repr[i] = mixture_probability(prior, agreement_vector(self_repr).combined);
  }
  return out;
}

SelectionOutcome sample_selection(std::vector<double> p_pred, std::vector<double> p_repr, std::uint64_t seed,
                                  std::uint64_t epoch, SelectionCombine combine) {
  if (p_pred.size() != p_repr.size()) throw std::invalid_argument("probability vectors differ in length");
  SelectionOutcome out;
  out.combine = combine;
  const std::size_t n = p_pred.size();
  out.chosen_pred.resize(n);
  out.chosen_repr.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, Stream::selection, {epoch, i}));
    const double u_pred = rng.uniform();
    const double u_repr = rng.uniform();
    out.chosen_pred[i] = p_pred[i] > u_pred ? 1 : 0;
    out.chosen_repr[i] = p_repr[i] > u_repr ? 1 : 0;
    if (out.chosen_pred[i]) out.selected_pred.push_back(i);
    if (out.chosen_repr[i]) out.selected_repr.push_back(i);
    bool keep = false;
    switch (combine) {
      case SelectionCombine::union_set: keep = out.chosen_pred[i] || out.chosen_repr[i]; break;
      case SelectionCombine::intersection: keep = out.chosen_pred[i] && out.chosen_repr[i]; break;
      case SelectionCombine::pred_only: keep = out.chosen_pred[i]; break;
      case SelectionCombine::repr_only: keep = out.chosen_repr[i]; break;
    }
    if (keep) out.selected.push_back(i);
  }
  out.p_pred = std::move(p_pred);
  out.p_repr = std::move(p_repr);
  if (combine == SelectionCombine::union_set) {
    std::vector<std::size_t> merged;
    std::set_union(out.selected_pred.begin(), out.selected_pred.end(), out.selected_repr.begin(),
                   out.selected_repr.end(), std::back_inserter(merged));
    if (merged != out.selected) throw std::logic_error("selected set is not S^p union S^r");
  }
  return out;
}

SelectionOutcome select_clean(const Dataset& ds, const ExpertEnsemble& ens, const FragmentationScheme& scheme,
                              const FeatureBank& bank, std::size_t K, std::uint64_t seed, std::uint64_t epoch,
                              SelectionCombine combine) {
  SelectionProbabilities probs = selection_probabilities(ds, ens, scheme, bank, K);
  return sample_selection(std::move(probs.pred), std::move(probs.repr), seed, epoch, combine);
}

void write_selection_jsonl(const SelectionOutcome& outcome, const Dataset& ds, std::ostream& out) {
  if (outcome.size() != ds.size()) throw std::invalid_argument("selection outcome does not match the dataset");
  std::size_t next = 0;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    const bool selected = next < outcome.selected.size() && outcome.selected[next] == i;
    if (selected) ++next;
    nlohmann::ordered_json j;
    j["index"] = i;
    j["p_pred"] = outcome.p_pred[i];
    j["p_repr"] = outcome.p_repr[i];
    j["chosen_pred"] = outcome.chosen_pred[i] != 0;
    j["chosen_repr"] = outcome.chosen_repr[i] != 0;
    j["selected"] = selected;
    j["y"] = ds[i].y;
    j["y_gt"] = ds[i].y_gt ? nlohmann::ordered_json(*ds[i].y_gt) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace confrag
