#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace ustar {

/// SplitMix64 stream. Streams are derived from a seed plus any number of
/// integer coordinates (scan id, frame index, ...), so a draw never depends on
/// the order in which other streams were consumed.
///
/// Distributions are implemented here rather than with <random> because the
/// standard distributions are not bit-reproducible across library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t state = 0) : state_(state) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a, used for config and content digests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace ustar
