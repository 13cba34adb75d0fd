#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace jssp {

// Mixes a 64-bit value (splitmix64 finalizer). Used to derive independent
// stream seeds from a master seed without correlated low bits.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return mix64(master ^ mix64(stream + 0x632be59bd9b4e019ull));
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t index) {
  return derive_seed(derive_seed(master, stream), index);
}

// mt19937_64 with explicit value mappings. The standard <random>
// distributions are implementation-defined, so all draws here go through
// our own mappings to keep outputs identical across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace jssp
