#include "vct/rng.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace vct {

namespace {

inline uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

double Rng::normal() {
  // u1 in (0, 1] so the log is finite
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::trunc_normal(double std_dev, double clip) {
  for (;;) {
    double x = normal();
    if (std::fabs(x) <= clip) return x * std_dev;
  }
}

std::string Rng::serialize() const {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%016llx %016llx %016llx %016llx",
                (unsigned long long)s_[0], (unsigned long long)s_[1],
                (unsigned long long)s_[2], (unsigned long long)s_[3]);
  return buf;
}

Rng Rng::deserialize(const std::string& s) {
  Rng r;
  unsigned long long a, b, c, d;
  if (std::sscanf(s.c_str(), "%llx %llx %llx %llx", &a, &b, &c, &d) != 4)
    throw std::invalid_argument("rng: bad serialized state");
  r.s_[0] = a;
  r.s_[1] = b;
  r.s_[2] = c;
  r.s_[3] = d;
  return r;
}

uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b) {
  uint64_t h = fnv1a64(tag);
  h = fnv1a64(&seed, sizeof(seed), h);
  h = fnv1a64(&a, sizeof(a), h);
  h = fnv1a64(&b, sizeof(b), h);
  // avoid the all-zero-ish degenerate seeds
  uint64_t x = h;
  return splitmix64(x);
}

uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

}  // namespace vct
