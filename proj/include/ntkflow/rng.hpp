#pragma once

#include <cstdint>
#include <random>

namespace ntkflow {

/// Deterministic random source. Every draw reduces to raw std::mt19937_64
/// outputs through fixed mappings, so streams are bit-reproducible across
/// platforms and builds (std::mt19937_64 is pinned by the standard; none of
/// the implementation-defined <random> distributions are used):
///
///   uniform()      (x >> 11) * 2^-53                          in [0, 1)
///   uniform_open() ((x >> 11) + 1) * 2^-53                    in (0, 1]
///   normal()       Box-Muller on (uniform_open, uniform); the second member
///                  of each pair is cached and returned by the next call
///   sign()         low bit of x, set -> +1.0, clear -> -1.0
///   below(n)       rejection sampling, unbiased uniform in [0, n)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform_open() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  double sign() { return (gen_() & 1u) ? 1.0 : -1.0; }

  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ntkflow
