#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace gandyn {

/// Counter-based generator: output i of a stream keyed by k is the SplitMix64
/// finalizer applied to k + i * golden_gamma. Child streams get independent keys
/// derived from the parent key and a stream label, so every consumer can own
/// its stream without sharing mutable state.
class Rng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::string_view kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed) : key_(mix(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + kGamma * ++counter_); }

  /// Independent stream identified by `stream`; the parent state is untouched.
  Rng split(std::uint64_t stream) const { return Rng(key_ ^ mix(stream + kGamma), 0); }
  Rng split(std::string_view label) const;

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  Rng(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline Rng Rng::split(std::string_view label) const {
  // FNV-1a of the label selects the stream.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return split(h);
}

/// Standard normal draw via Box-Muller on two uniforms. Written out so samples
/// do not depend on the standard library's distribution implementation.
double normal(Rng& rng);

}  // namespace gandyn
