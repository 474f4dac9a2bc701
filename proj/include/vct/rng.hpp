#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vct {

// Deterministic PRNG used everywhere randomness is needed. Distributions are
// implemented by hand on top of the raw 64-bit stream so that the sequence is
// pinned by this code alone, not by the standard library's unspecified
// distribution algorithms.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // [0, 1)
  double uniform();
  // [0, n)
  int64_t uniform_int(int64_t n);
  // standard normal, Box-Muller (one value per draw)
  double normal();
  // normal(0, std) resampled until |x| <= clip * std
  double trunc_normal(double std_dev, double clip = 2.0);

  template <typename V>
  void shuffle(V& v) {  // Fisher-Yates
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  std::string serialize() const;
  static Rng deserialize(const std::string& s);

 private:
  Rng() = default;
  uint64_t s_[4];  // xoshiro256**
};

// Derive an independent stream seed from a base seed and a purpose tag.
uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

// FNV-1a over bytes; used for config hashing and dataset digests.
uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a64(std::string_view s);

std::string hex64(uint64_t v);

}  // namespace vct
