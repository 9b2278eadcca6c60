#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace radarsim {

// Counter-based splitmix64. One u64 of state, so streams are trivially
// serializable and a resumed run replays the exact same tail of draws.
class Rng {
 public:
  Rng() : state_(0) {}
  explicit Rng(uint64_t state) : state_(state) {}

  // Derives an independent stream from (seed, label, index). Every consumer
  // in the library names its stream; nothing shares a raw seed directly.
  static Rng stream(uint64_t seed, std::string_view label, uint64_t index = 0) {
    uint64_t h = mix(seed + 0x9e3779b97f4a7c15ull);
    h = mix(h ^ fnv1a(label));
    h = mix(h ^ (index * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
    return Rng(h);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // (0, 1], safe as a log() argument
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). Rejection sampling over the top bits.
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller, cosine branch. Consumes exactly two u64 draws per call so a
  // stream's position is a pure function of how many normals were taken.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  static constexpr uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  static constexpr uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  uint64_t state_;
};

// Seeded Fisher-Yates permutation of [0, n). Used for epoch shuffles; the
// (seed, label, epoch) triple makes every epoch's order reproducible without
// storing it.
inline void shuffled_indices(uint64_t seed, std::string_view label,
                             uint64_t epoch, size_t n, std::vector<uint64_t>& out) {
  out.resize(n);
  for (size_t i = 0; i < n; ++i) out[i] = i;
  Rng rng = Rng::stream(seed, label, epoch);
  for (size_t i = n; i > 1; --i) {
    const size_t j = rng.below(i);
    std::swap(out[i - 1], out[j]);
  }
}

}  // namespace radarsim
