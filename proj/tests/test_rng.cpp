#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "uschema/rng.hpp"

using uschema::Rng;

TEST_CASE("same seed gives identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng c(123), d(123);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(c.uniform() == d.uniform());
    REQUIRE(c.gaussian() == d.gaussian());
  }
}

TEST_CASE("uniform stays in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform_below stays in range and covers all values") {
  Rng rng(99);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_below(5)];
  for (int c : counts) {
    // expected 10000 each; 5 sigma is about +-470
    REQUIRE(c > 9000);
    REQUIRE(c < 11000);
  }
}

TEST_CASE("gaussian has roughly standard moments") {
  Rng rng(42);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.gaussian();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.02);
  REQUIRE(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("fork produces decorrelated reproducible streams") {
  const Rng base(5);
  Rng s1 = base.fork(1, 0);
  Rng s2 = base.fork(2, 0);
  Rng s1_again = base.fork(1, 0);
  REQUIRE(s1.next_u64() != s2.next_u64());
  Rng s1_b = base.fork(1, 0);
  REQUIRE(s1_again.next_u64() == s1_b.next_u64());
}

TEST_CASE("shuffle is a permutation and deterministic") {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> w = v;
  Rng a(3), b(3);
  a.shuffle(v);
  b.shuffle(w);
  REQUIRE(v == w);
  std::sort(v.begin(), v.end());
  REQUIRE(v == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}
