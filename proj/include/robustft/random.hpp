#pragma once

#include <cstdint>
#include <vector>

namespace robustft {

/// Counter-based random stream. Every draw is a pure function of
/// (key, counter), and split() derives statistically independent child
/// streams, so per-image noise does not depend on iteration order.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  /// Child stream identified by `id`; does not advance this stream.
  RandomStream split(std::uint64_t id) const {
    RandomStream child;
    child.key_ = mix(key_ ^ mix(id + 0x9e3779b97f4a7c15ULL));
    return child;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() { return at(counter_++); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return to_unit(next_u64()); }
  /// Standard normal via Box-Muller; consumes two counters.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Random-access draw that ignores and does not move the counter.
  std::uint64_t at(std::uint64_t index) const { return mix(key_ + index * 0x9e3779b97f4a7c15ULL); }
  double uniform_at(std::uint64_t index) const { return to_unit(at(index)); }

  static double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

 private:
  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, RandomStream& rng);

}  // namespace robustft
