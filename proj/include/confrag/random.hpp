#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace confrag {

// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t z);

// Derives an independent stream key from a base seed and a list of tags
// (operation id, epoch, sample index, ...). Distinct tag lists give unrelated
// streams, so the order in which streams are consumed never matters.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

// Stream tags used across the library.
enum class Stream : std::uint64_t {
  synthetic = 0x5157,
  symmetric_noise,
  gaussian_noise,
  split,
  net_init,
  expert_shuffle,
  regressor_shuffle,
  jitter,
  selection,
  random_subset,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                 std::initializer_list<std::uint64_t> tags = {}) {
  std::uint64_t key = derive_seed(seed, {static_cast<std::uint64_t>(stream)});
  return derive_seed(key, tags);
}

// Small portable generator. The standard distributions are
// implementation-defined, so sampling is done by hand here to keep results
// bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = below(i);
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace confrag
