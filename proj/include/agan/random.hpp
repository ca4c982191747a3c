#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace agan {

/// Seeded random stream: std::mt19937_64 with fixed, library-independent mappings.
///
///  - uniform():      top 53 bits of one draw scaled by 2^-53, in [0, 1)
///  - uniform_int(n): rejection sampling on one draw, in [0, n)
///  - normal():       Box-Muller on two uniforms, cosine branch only (no cached spare)
///
/// The whole state is the engine state, so save()/restore() round-trips exactly.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t uniform_int(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

  std::string save() const;
  void restore(const std::string& state);

  friend bool operator==(const Prng& a, const Prng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with stream identifiers (splitmix64 finalizer) so that derived
/// streams (per epoch, per step, per purpose) are decorrelated.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace agan
