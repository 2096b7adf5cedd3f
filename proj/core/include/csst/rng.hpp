#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace csst {

/// Seeded generator with platform-independent draws.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard;
/// the standard library distributions are not, so the conversions to
/// uniform/normal/integer values live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  double beta(double a, double b);

  // Independent stream derived from this generator's seed material.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::string serialize() const;
  void deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive sub-seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace csst
