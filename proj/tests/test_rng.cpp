#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "vct/rng.hpp"

using vct::Rng;

TEST_CASE("rng stream is reproducible and seed-sensitive") {
  Rng a(42), b(42), c(43);
  bool diverged = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("uniform stays in [0,1) with plausible moments") {
  Rng r(7);
  double sum = 0, sum2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.01);
  CHECK(std::abs(var - 1.0 / 12.0) < 0.01);
}

TEST_CASE("uniform_int covers the range without bias") {
  Rng r(11);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    int64_t v = r.uniform_int(10);
    REQUIRE(v >= 0);
    REQUIRE(v < 10);
    counts[static_cast<size_t>(v)]++;
  }
  for (int c : counts) CHECK(std::abs(c - n / 10) < 500);
}

TEST_CASE("normal has unit moments") {
  Rng r(13);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("trunc_normal respects the clip") {
  Rng r(17);
  for (int i = 0; i < 50000; ++i) {
    double x = r.trunc_normal(0.02);
    CHECK(std::abs(x) <= 0.04 + 1e-12);
  }
}

TEST_CASE("shuffle is a permutation and depends only on the seed") {
  std::vector<int> v(100), w(100);
  std::iota(v.begin(), v.end(), 0);
  w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 100);
  std::vector<int> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  bool moved = false;
  for (int i = 0; i < 100; ++i)
    if (v[static_cast<size_t>(i)] != i) moved = true;
  CHECK(moved);
  CHECK(sorted != v);
}

TEST_CASE("serialize round-trips mid-stream state") {
  Rng r(99);
  for (int i = 0; i < 10; ++i) r.next_u64();
  std::string s = r.serialize();
  Rng q = Rng::deserialize(s);
  for (int i = 0; i < 32; ++i) CHECK(r.next_u64() == q.next_u64());
}

TEST_CASE("mix_seed separates purposes") {
  uint64_t a = vct::mix_seed(1, "epoch", 0);
  uint64_t b = vct::mix_seed(1, "epoch", 1);
  uint64_t c = vct::mix_seed(1, "slots", 0);
  uint64_t d = vct::mix_seed(2, "epoch", 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(a == vct::mix_seed(1, "epoch", 0));
}

TEST_CASE("fnv1a64 matches published reference digests") {
  // Widely published FNV-1a test vectors.
  CHECK(vct::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(vct::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(vct::fnv1a64("foobar") == 0x85944171f73967e8ull);
}
