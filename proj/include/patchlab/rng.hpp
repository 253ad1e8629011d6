#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace patchlab {

/// Deterministic random source shared by every sampling operation.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All distributions are implemented here rather than taken from
/// <random>, whose distributions are implementation-defined. Integer-valued
/// draws (masks, permutations, choices) are therefore bit-identical on every
/// platform; real-valued draws additionally depend on libm's log/cos/pow.
class SeededRandomSource {
 public:
  /// Recorded in manifests; bump when any draw below changes.
  static constexpr std::string_view kAlgorithm = "mt19937_64/pl-dist-v1";

  explicit SeededRandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p) { return uniform01() < p; }
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  double beta(double a, double b);

  /// Independent stream for a sub-task, e.g. one image of a batch.
  SeededRandomSource derive(std::uint64_t tag) const {
    return SeededRandomSource(mix_seed(seed_, tag));
  }
  SeededRandomSource derive(std::string_view tag) const {
    return derive(hash_id(tag));
  }

  /// splitmix64 finalizer over seed ^ golden-ratio-scaled tag.
  static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);
  /// FNV-1a 64 of a textual identifier.
  static std::uint64_t hash_id(std::string_view id);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace patchlab
