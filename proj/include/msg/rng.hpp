#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "msg/strings.hpp"

namespace msg {

// Deterministic random stream. std::mt19937_64 output is fully specified by
// the standard; the distribution helpers below are hand-rolled because the
// standard's distribution objects are implementation-defined and would break
// byte-identical output across toolchains.
class RngStream {
public:
  explicit RngStream(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). Rejection sampling over the low bits keeps the
  // draw unbiased and reproducible.
  uint64_t bounded(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool coin(double p_true = 0.5) { return uniform01() < p_true; }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[bounded(items.size())];
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n) without replacement.
  std::vector<size_t> sample_indices(size_t n, size_t k) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k && i < n; ++i) {
      size_t j = i + static_cast<size_t>(bounded(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k < n ? k : n);
    return idx;
  }

private:
  std::mt19937_64 engine_;
};

// Stream id for one generation task: hash of the master seed and the task's
// identity, so items are reproducible independent of worker scheduling.
inline uint64_t derive_stream(uint64_t master_seed, std::string_view record_id,
                              std::string_view template_id, uint64_t ordinal = 0) {
  uint64_t h = str::fnv1a64(record_id);
  h = str::fnv1a64(template_id, h);
  h ^= master_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= ordinal * 0xff51afd7ed558ccdull;
  // splitmix finalizer to spread low-entropy ordinals
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ull;
  h ^= h >> 33;
  return h;
}

}  // namespace msg
