#pragma once

#include <cstdint>
#include <random>

namespace ultra {

/// Deterministic random source used everywhere in the project.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions are implemented here rather than taken from
/// <random>, because the standard leaves those implementation-defined and we
/// want identical streams across standard libraries:
///   uniform()     53-bit mantissa fill in [0, 1)
///   normal()      Box-Muller, consuming two uniforms per pair of draws
///   below(n)      Lemire multiply-shift with rejection, unbiased in [0, n)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed for a nested stream, e.g. derive_seed(derive_seed(base, epoch), sample).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix_seed(base ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

}  // namespace ultra
