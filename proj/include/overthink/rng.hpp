#pragma once

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace overthink {

// SplitMix64 generator. Chosen over std:: engines+distributions because the
// standard distributions are implementation-defined; every draw here is
// bit-identical across platforms, which the reproducibility contracts require.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_unit() < p; }

  // Unbiased integer in [0, bound) via rejection sampling.
  uint64_t below(uint64_t bound) {
    if (bound <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

  // k distinct indices from {0,...,n-1}, returned ascending (original order).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(below(static_cast<uint64_t>(n - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  // Derive an independent stream seed from a master seed. Counter-based so
  // parallel consumers (bootstrap replicates, simulation trials) can be
  // seeded without sharing state.
  static uint64_t derive(uint64_t master, uint64_t stream) {
    Rng r(master ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return r.next_u64();
  }

  static uint64_t derive(uint64_t master, std::string_view tag) {
    uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    return derive(master, h);
  }

 private:
  uint64_t state_;
};

}  // namespace overthink
