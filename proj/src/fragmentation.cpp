#include "confrag/fragmentation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "confrag/log.hpp"
#include "confrag/random.hpp"

namespace confrag {

void validate_fragment_count(int fragments) {
  if (fragments % 2 != 0) {
    throw std::invalid_argument("fragment count F must be even, got " + std::to_string(fragments));
  }
  if (fragments < kMinFragments || fragments > kMaxFragments) {
    throw std::invalid_argument("fragment count F must lie in [4, 12], got " + std::to_string(fragments));
  }
}

FragmentId FragmentationScheme::fragment_of(double y) const {
  if (!(y >= lo() && y <= hi())) {
    throw std::out_of_range("label " + std::to_string(y) + " lies outside the fragmented range");
  }
  auto it = std::upper_bound(boundaries.begin(), boundaries.end(), y);
  auto f = static_cast<FragmentId>(it - boundaries.begin()) - 1;
  return std::min(f, fragments - 1);
}

FragmentationScheme fragment_labels(const Dataset& ds, int fragments) {
  validate_fragment_count(fragments);
  FragmentationScheme scheme;
  scheme.fragments = fragments;
  const double lo = ds.label_min();
  const double hi = ds.label_max();
  scheme.boundaries.resize(static_cast<std::size_t>(fragments) + 1);
  for (int k = 0; k <= fragments; ++k) {
    scheme.boundaries[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / fragments;
  }
  scheme.boundaries.back() = hi;

  std::vector<double> sums(static_cast<std::size_t>(fragments), 0.0);
  scheme.counts.assign(static_cast<std::size_t>(fragments), 0);
  for (const Sample& s : ds.samples()) {
    auto f = static_cast<std::size_t>(scheme.fragment_of(s.y));
    sums[f] += s.y;
    ++scheme.counts[f];
  }
  scheme.means.resize(static_cast<std::size_t>(fragments));
  for (std::size_t f = 0; f < sums.size(); ++f) {
    if (scheme.counts[f] == 0) {
      log::warn("fragment " + std::to_string(f + 1) + " is empty; using its interval midpoint as mean");
      scheme.means[f] = 0.5 * (scheme.boundaries[f] + scheme.boundaries[f + 1]);
    } else {
      scheme.means[f] = sums[f] / static_cast<double>(scheme.counts[f]);
    }
  }
  return scheme;
}

Eigen::MatrixXd fragment_edge_weights(const Dataset& ds, const FragmentationScheme& scheme) {
  const auto F = static_cast<std::size_t>(scheme.fragments);
  // Fragments are ordered intervals, so the closest pair between D_i and D_j
  // (i < j) is always (max D_i, min D_j).
  std::vector<double> hull_lo(F, std::numeric_limits<double>::infinity());
  std::vector<double> hull_hi(F, -std::numeric_limits<double>::infinity());
  for (const Sample& s : ds.samples()) {
    auto f = static_cast<std::size_t>(scheme.fragment_of(s.y));
    hull_lo[f] = std::min(hull_lo[f], s.y);
    hull_hi[f] = std::max(hull_hi[f], s.y);
  }
  for (std::size_t f = 0; f < F; ++f) {
    if (std::isinf(hull_lo[f])) {
      hull_lo[f] = scheme.boundaries[f];
      hull_hi[f] = scheme.boundaries[f + 1];
    }
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(F));
  for (std::size_t i = 0; i < F; ++i) {
    for (std::size_t j = i + 1; j < F; ++j) {
      const double gap = std::max(0.0, hull_lo[j] - hull_hi[i]);
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gap;
      w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = gap;
    }
  }
  return w;
}

namespace {

void extend_matchings(std::vector<bool>& used, Matching& current, std::vector<Matching>& out) {
  auto first = std::find(used.begin(), used.end(), false);
  if (first == used.end()) {
    out.push_back(current);
    return;
  }
  const auto a = static_cast<FragmentId>(first - used.begin());
  used[static_cast<std::size_t>(a)] = true;
  for (std::size_t b = static_cast<std::size_t>(a) + 1; b < used.size(); ++b) {
    if (used[b]) continue;
    used[b] = true;
    current.emplace_back(a, static_cast<FragmentId>(b));
    extend_matchings(used, current, out);
    current.pop_back();
    used[b] = false;
  }
  used[static_cast<std::size_t>(a)] = false;
}

}  // namespace

std::vector<Matching> enumerate_perfect_matchings(int fragments) {
  validate_fragment_count(fragments);
  std::vector<bool> used(static_cast<std::size_t>(fragments), false);
  Matching current;
  std::vector<Matching> out;
  extend_matchings(used, current, out);
  return out;
}

Matching canonical_matching(Matching matching) {
  for (auto& [a, b] : matching) {
    if (a > b) std::swap(a, b);
  }
  std::sort(matching.begin(), matching.end());
  return matching;
}

ContrastivePairing::ContrastivePairing(Matching matching, int fragments) : pairs_(canonical_matching(std::move(matching))) {
  validate_fragment_count(fragments);
  const auto F = static_cast<std::size_t>(fragments);
  if (pairs_.size() * 2 != F) {
    throw std::invalid_argument("pairing " + to_string(pairs_) + " does not cover " + std::to_string(fragments) +
                                " fragments");
  }
  partner_.assign(F, -1);
  pair_of_.assign(F, 0);
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    const auto [a, b] = pairs_[p];
    if (a < 0 || b >= fragments || a == b) {
      throw std::invalid_argument("pairing " + to_string(pairs_) + " has an invalid pair");
    }
    if (partner_[static_cast<std::size_t>(a)] != -1 || partner_[static_cast<std::size_t>(b)] != -1) {
      throw std::invalid_argument("pairing " + to_string(pairs_) + " uses a fragment twice");
    }
    partner_[static_cast<std::size_t>(a)] = b;
    partner_[static_cast<std::size_t>(b)] = a;
    pair_of_[static_cast<std::size_t>(a)] = p;
    pair_of_[static_cast<std::size_t>(b)] = p;
  }
}

std::size_t ContrastivePairing::pair_index(FragmentId a, FragmentId b) const {
  if (a > b) std::swap(a, b);
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    if (pairs_[p] == FragmentPair{a, b}) return p;
  }
  throw std::invalid_argument("pair (" + std::to_string(a + 1) + "," + std::to_string(b + 1) +
                              ") is not part of the pairing " + to_string(pairs_));
}

std::string to_string(const Matching& matching) {
  std::ostringstream out;
  for (std::size_t p = 0; p < matching.size(); ++p) {
    out << (p ? "," : "") << '(' << matching[p].first + 1 << ',' << matching[p].second + 1 << ')';
  }
  return out.str();
}

Matching parse_matching(const std::string& text) {
  std::vector<int> numbers;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::size_t used = 0;
    int v = std::stoi(token, &used);
    if (used != token.size()) throw std::invalid_argument("bad fragment id '" + token + "' in pairing '" + text + "'");
    numbers.push_back(v);
    token.clear();
  };
  for (char c : text) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      token.push_back(c);
    } else if (c == ',' || c == '-' || c == '(' || c == ')' || c == ' ' || c == '[' || c == ']') {
      flush();
    } else {
      throw std::invalid_argument("unexpected character '" + std::string(1, c) + "' in pairing '" + text + "'");
    }
  }
  flush();
  if (numbers.empty() || numbers.size() % 2 != 0) {
    throw std::invalid_argument("pairing '" + text + "' must list fragment ids in pairs");
  }
  Matching m;
  for (std::size_t k = 0; k < numbers.size(); k += 2) {
    if (numbers[k] < 1 || numbers[k + 1] < 1) {
      throw std::invalid_argument("fragment ids in pairing '" + text + "' are 1-based");
    }
    m.emplace_back(numbers[k] - 1, numbers[k + 1] - 1);
  }
  return canonical_matching(std::move(m));
}

MatchingScore score_matching(const Eigen::MatrixXd& weights, const Matching& matching) {
  MatchingScore score{std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& [a, b] : matching) {
    const double w = weights(a, b);
    score.min_weight = std::min(score.min_weight, w);
    score.total_weight += w;
  }
  return score;
}

ContrastivePairing select_contrastive_pairing(const Eigen::MatrixXd& weights) {
  if (weights.rows() != weights.cols()) throw std::invalid_argument("edge weight matrix must be square");
  const auto F = static_cast<int>(weights.rows());
  validate_fragment_count(F);
  for (Eigen::Index i = 0; i < F; ++i) {
    for (Eigen::Index j = 0; j < F; ++j) {
      const double w = weights(i, j);
      if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("edge weights must be finite and non-negative");
      if (std::abs(w - weights(j, i)) > 1e-12 * std::max(1.0, std::abs(w))) {
        throw std::invalid_argument("edge weight matrix must be symmetric");
      }
    }
  }

  const std::vector<Matching> matchings = enumerate_perfect_matchings(F);
  const Matching* best = nullptr;
  MatchingScore best_score;
  // Enumeration is lexicographic, so keeping the first of equal scores
  // implements the final tie-break.
  for (const Matching& m : matchings) {
    const MatchingScore s = score_matching(weights, m);
    if (best == nullptr || s.min_weight > best_score.min_weight ||
        (s.min_weight == best_score.min_weight && s.total_weight > best_score.total_weight)) {
      best = &m;
      best_score = s;
    }
  }
  return ContrastivePairing(*best, F);
}

double max_jitter(int fragments) {
  validate_fragment_count(fragments);
  return 1.0 / (2.0 * (fragments - 1));
}

JitteredScheme make_jittered(const FragmentationScheme& scheme, double delta) {
  if (!(delta >= 0.0) || delta > 0.5 * scheme.width()) {
    throw std::invalid_argument("jitter delta must lie in [0, fragment width / 2]");
  }
  JitteredScheme js;
  js.base = scheme;
  js.delta = delta;
  js.jitter = delta / scheme.range();
  const auto F = static_cast<std::size_t>(scheme.fragments);
  js.lower.resize(F);
  js.upper.resize(F);
  for (std::size_t f = 0; f < F; ++f) {
    js.lower[f] = f == 0 ? scheme.lo() : scheme.boundaries[f] - delta;
    js.upper[f] = f + 1 == F ? scheme.hi() : scheme.boundaries[f + 1] + delta;
  }
  return js;
}

JitteredScheme jitter_scheme(const FragmentationScheme& scheme, double jitter, std::uint64_t seed,
                             std::uint64_t epoch) {
  const double bound = max_jitter(scheme.fragments);
  if (!(jitter >= 0.0 && jitter <= bound)) {
    throw std::invalid_argument("jitter J must lie in [0, " + std::to_string(bound) + "], got " +
                                std::to_string(jitter));
  }
  Rng rng(derive_seed(seed, Stream::jitter, {epoch}));
  double delta = rng.uniform(0.0, jitter * scheme.range());
  // Near the upper bound of J a two-sided expansion could reach past the middle
  // of a fragment; capping at half a width keeps every label in at most two
  // fragments.
  delta = std::min(delta, 0.5 * scheme.width());
  JitteredScheme js = make_jittered(scheme, delta);
  js.jitter = jitter;
  return js;
}

std::vector<FragmentId> jittered_membership(double y, const JitteredScheme& js) {
  const FragmentationScheme& base = js.base;
  if (!(y >= base.lo() && y <= base.hi())) {
    throw std::out_of_range("label " + std::to_string(y) + " lies outside the fragmented range");
  }
  std::vector<FragmentId> out;
  const FragmentId F = base.fragments;
  for (FragmentId f = 0; f < F; ++f) {
    const auto k = static_cast<std::size_t>(f);
    const bool inside = y >= js.lower[k] && (y < js.upper[k] || (f == F - 1 && y <= js.upper[k]));
    if (inside) out.push_back(f);
  }
  return out;
}

}  // namespace confrag
