#include "ntkflow/rng.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "testing.hpp"

using ntkflow::Rng;

TEST(raw_matches_std_mt19937_64) {
  // The raw stream must be exactly the standard-pinned mt19937_64 sequence.
  Rng rng(42);
  std::mt19937_64 ref(42);
  for (int i = 0; i < 1000; ++i) CHECK(rng.raw() == ref());
}

TEST(deterministic_streams) {
  Rng a(7), b(7), c(8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t x = a.raw();
    all_equal = all_equal && x == b.raw();
    any_diff = any_diff || x != c.raw();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST(uniform_range_and_mapping) {
  // uniform() must be (x >> 11) * 2^-53, element of [0, 1).
  Rng rng(3);
  std::mt19937_64 ref(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    const double expect = static_cast<double>(ref() >> 11) * 0x1.0p-53;
    CHECK(u == expect);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST(uniform_open_mapping) {
  // uniform_open() must be ((x >> 11) + 1) * 2^-53, element of (0, 1].
  Rng rng(3);
  std::mt19937_64 ref(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform_open();
    const double expect = static_cast<double>((ref() >> 11) + 1) * 0x1.0p-53;
    CHECK(u == expect);
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
}

TEST(uniform_lo_hi) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.0, 3.0);
    CHECK(u >= -2.0);
    CHECK(u < 3.0);
  }
}

TEST(uniform_moments) {
  Rng rng(11);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK_NEAR(mean, 0.5, 0.005);        // 5+ sigma: SE = 1/sqrt(12 n) ~ 9e-4
  CHECK_NEAR(var, 1.0 / 12.0, 0.003);  // generous
}

TEST(normal_is_box_muller_on_the_raw_stream) {
  // Mirror the documented construction from the raw stream: each pair of
  // draws (u1 open, u2 half-open) yields r cos(theta) then r sin(theta).
  Rng rng(19);
  std::mt19937_64 ref(19);
  for (int i = 0; i < 500; ++i) {
    const double u1 = static_cast<double>((ref() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(ref() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    CHECK(rng.normal() == r * std::cos(theta));
    CHECK(rng.normal() == r * std::sin(theta));
  }
}

TEST(normal_moments) {
  Rng rng(23);
  const int n = 200000;
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
    s4 += z * z * z * z;
  }
  CHECK_NEAR(s1 / n, 0.0, 0.015);  // SE = 1/sqrt(n) ~ 2.2e-3
  CHECK_NEAR(s2 / n, 1.0, 0.02);   // SE = sqrt(2/n) ~ 3.2e-3
  CHECK_NEAR(s3 / n, 0.0, 0.06);   // SE = sqrt(15/n) ~ 8.7e-3
  CHECK_NEAR(s4 / n, 3.0, 0.15);   // SE = sqrt(96/n) ~ 2.2e-2
}

TEST(sign_values_and_balance) {
  Rng rng(29);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double s = rng.sign();
    CHECK(s == 1.0 || s == -1.0);
    sum += s;
  }
  CHECK_NEAR(sum / n, 0.0, 0.02);  // SE = 1/sqrt(n) ~ 3.2e-3
}

TEST(below_bounds_and_uniformity) {
  Rng rng(31);
  const std::uint64_t k = 7;
  const int n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t v = rng.below(k);
    CHECK(v < k);
    ++counts[static_cast<std::size_t>(v)];
  }
  // Expected 1e4 per bucket, sd ~ 92; allow 6 sigma.
  for (std::uint64_t b = 0; b < k; ++b) CHECK_NEAR(counts[b], 10000.0, 600.0);
  CHECK(rng.below(1) == 0);
  CHECK_THROWS(rng.below(0), std::invalid_argument);
}

TEST_MAIN()
