#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "confrag/data.hpp"

namespace confrag {

// Fragment ids are 0-based in the API. Text formats (CLI, JSON, CSV) print
// them 1-based, e.g. "(1,3),(2,4)".
using FragmentId = int;

inline constexpr int kMinFragments = 4;
inline constexpr int kMaxFragments = 12;

void validate_fragment_count(int fragments);

// Equal-width partition of [label_min, label_max]. Intervals are right-open
// except the last, which is closed.
struct FragmentationScheme {
  int fragments = 0;
  std::vector<double> boundaries;  // fragments + 1 ascending values
  std::vector<double> means;       // mean observed label per fragment
  std::vector<std::size_t> counts;

  double lo() const { return boundaries.front(); }
  double hi() const { return boundaries.back(); }
  double range() const { return hi() - lo(); }
  double width() const { return range() / fragments; }
  FragmentId fragment_of(double y) const;
};

// Empty fragments produce a warning and take their interval midpoint as mean.
FragmentationScheme fragment_labels(const Dataset& ds, int fragments);

// e_ij = min |y_a - y_b| over a in D_i, b in D_j. An empty fragment is
// represented by its interval instead of its sample hull.
Eigen::MatrixXd fragment_edge_weights(const Dataset& ds, const FragmentationScheme& scheme);

using FragmentPair = std::pair<FragmentId, FragmentId>;
// Pairs sorted, each with first < second.
using Matching = std::vector<FragmentPair>;

// All (F-1)!! perfect matchings of K_F in lexicographic order.
std::vector<Matching> enumerate_perfect_matchings(int fragments);

class ContrastivePairing {
 public:
  // Canonicalizes and validates that `matching` is a perfect matching of
  // `fragments` vertices.
  ContrastivePairing(Matching matching, int fragments);

  const Matching& pairs() const { return pairs_; }
  int fragments() const { return static_cast<int>(partner_.size()); }
  FragmentId partner(FragmentId f) const { return partner_.at(static_cast<std::size_t>(f)); }
  // Index into pairs() of the pair containing f.
  std::size_t pair_index(FragmentId f) const { return pair_of_.at(static_cast<std::size_t>(f)); }
  // Index of the unordered pair {a, b}; throws if it is not part of the pairing.
  std::size_t pair_index(FragmentId a, FragmentId b) const;

  bool operator==(const ContrastivePairing& other) const { return pairs_ == other.pairs_; }

 private:
  Matching pairs_;
  std::vector<FragmentId> partner_;
  std::vector<std::size_t> pair_of_;
};

Matching canonical_matching(Matching matching);
std::string to_string(const Matching& matching);
// Parses "1-3,2-4" or "(1,3),(2,4)" (1-based) into a canonical matching.
Matching parse_matching(const std::string& text);

struct MatchingScore {
  double min_weight = 0.0;
  double total_weight = 0.0;
};
MatchingScore score_matching(const Eigen::MatrixXd& weights, const Matching& matching);

// Perfect matching with the largest minimum edge weight. Ties go to the larger
// total weight, then to the lexicographically smallest matching.
ContrastivePairing select_contrastive_pairing(const Eigen::MatrixXd& weights);

// Largest admissible jitter ratio, 1 / (2 (F - 1)).
double max_jitter(int fragments);

// Fragment coverage for one epoch. Each interior boundary is pushed outward by
// delta on both sides, so neighbors overlap by 2 delta.
struct JitteredScheme {
  FragmentationScheme base;
  double jitter = 0.0;  // J, fraction of the label range
  double delta = 0.0;   // this epoch's expansion, in label units
  std::vector<double> lower;
  std::vector<double> upper;
};

JitteredScheme make_jittered(const FragmentationScheme& scheme, double delta);
JitteredScheme jitter_scheme(const FragmentationScheme& scheme, double jitter, std::uint64_t seed,
                             std::uint64_t epoch);
// The one or two fragments whose jittered interval contains y.
std::vector<FragmentId> jittered_membership(double y, const JitteredScheme& js);

}  // namespace confrag
