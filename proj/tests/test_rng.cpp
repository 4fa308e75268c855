#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "molgen/rng.hpp"

using molgen::Rng;

TEST_CASE("same seed reproduces the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
  for (int i = 0; i < 1000; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("uniform lies in [0,1) and fills the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform(lo,hi) respects its bounds") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-2.5, 3.5);
    CHECK(u >= -2.5);
    CHECK(u < 3.5);
  }
}

TEST_CASE("below(n) covers exactly [0,n) roughly uniformly") {
  Rng rng(11);
  const uint64_t n = 10;
  std::vector<int> counts(n, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const uint64_t v = rng.below(n);
    REQUIRE(v < n);
    ++counts[v];
  }
  for (uint64_t v = 0; v < n; ++v) {
    CHECK(counts[v] > draws / 10 - 600);
    CHECK(counts[v] < draws / 10 + 600);
  }
  CHECK(rng.below(1) == 0);
}

TEST_CASE("normal has unit-gaussian moments") {
  Rng rng(13);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
    sum3 += x * x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(sum3 / n) < 0.05);
}

TEST_CASE("fork yields distinct reproducible child streams") {
  Rng root(21);
  Rng a = root.fork(0);
  Rng b = root.fork(1);
  Rng a2 = root.fork(0);
  bool all_same = true;
  for (int i = 0; i < 64; ++i) {
    const uint64_t x = a.next_u64();
    if (x != b.next_u64()) all_same = false;
    CHECK(x == a2.next_u64());
  }
  CHECK_FALSE(all_same);
  // forking does not consume state from the parent
  Rng root2(21);
  CHECK(root.next_u64() == root2.next_u64());
}
