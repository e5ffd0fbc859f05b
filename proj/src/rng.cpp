#include "ntkflow/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ntkflow {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite; u2 in [0, 1).
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  // Accept only the largest prefix of [0, 2^64) that is a multiple of n.
  const std::uint64_t rem = (UINT64_MAX % n + 1) % n;  // 2^64 mod n
  const std::uint64_t top = UINT64_MAX - rem;
  std::uint64_t x = gen_();
  while (x > top) x = gen_();
  return x % n;
}

}  // namespace ntkflow
