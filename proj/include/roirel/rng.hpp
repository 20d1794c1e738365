#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace roirel {

/// Deterministic generator: std::mt19937_64 (bit-exact by the standard)
/// with hand-written variate transforms, because the std distributions are
/// implementation-defined. Streams split by label through splitmix64.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm =
      "mt19937_64/splitmix64-label-split/box-muller";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent stream derived from this generator's seed and a label.
  /// Does not advance this generator.
  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace roirel
