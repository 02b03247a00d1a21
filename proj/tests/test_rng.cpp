#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "trb/rng.hpp"

using trb::Rng;

TEST_SUITE_BEGIN("rng");

TEST_CASE("fixed seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("uniform stays in range") {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform(-3.0, 5.0);
    CHECK(u >= -3.0);
    CHECK(u < 5.0);
  }
}

TEST_CASE("normal has roughly standard moments") {
  Rng r(7);
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n;
  double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("randint covers both endpoints and stays inside") {
  Rng r(3);
  bool lo_hit = false, hi_hit = false;
  for (int i = 0; i < 5000; ++i) {
    auto v = r.randint(-2, 9);
    CHECK(v >= -2);
    CHECK(v <= 9);
    lo_hit = lo_hit || v == -2;
    hi_hit = hi_hit || v == 9;
  }
  CHECK(lo_hit);
  CHECK(hi_hit);
}

TEST_CASE("shuffle is a permutation") {
  Rng r(11);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto orig = v;
  r.shuffle(v);
  CHECK(v != orig);  // astronomically unlikely to be identity
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}

TEST_CASE("state round-trips mid-stream") {
  Rng r(99);
  for (int i = 0; i < 123; ++i) r.next_u32();
  std::string snap = r.state();
  std::vector<std::uint32_t> expect;
  for (int i = 0; i < 50; ++i) expect.push_back(r.next_u32());

  Rng other(0);
  other.set_state(snap);
  for (int i = 0; i < 50; ++i) CHECK(other.next_u32() == expect[i]);
}

TEST_SUITE_END();
