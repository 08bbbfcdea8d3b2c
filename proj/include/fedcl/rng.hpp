#pragma once

#include <cmath>
#include <cstdint>

namespace fedcl {

// splitmix64 finalizer (Steele, Lea, Flood). Used both to hash stream
// coordinates and to expand a seed into xoshiro state.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// xoshiro256** 1.0 (Blackman & Vigna), state seeded through splitmix64.
/// All derived values (uniforms, normals, index draws) are generated by the
/// documented algorithms below, so a (seed, stream) pair reproduces the same
/// sequence on every run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) {
      sm += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Marsaglia's polar method; the paired value is
  /// discarded so the stream position depends only on accepted draws.
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform01() - 1.0;
      const double v = 2.0 * uniform01() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next();
      if (x >= threshold) return x % n;
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

/// Purpose tags for deriving independent substreams from one experiment seed.
enum class Stream : std::uint64_t {
  ParamInit = 1,
  Centroid = 2,
  Allocation = 3,
  Samples = 4,
  BatchOrder = 5,
  FinetuneOrder = 6,
};

/// Derives a deterministic substream key: a hash chain over
/// (seed, a, b, purpose). `a`/`b` are slot values such as client id and
/// task id; unused slots pass 0.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b, Stream purpose) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ mix64(a + 0x100));
  h = mix64(h ^ mix64(b + 0x200));
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(purpose) + 0x300));
  return h;
}

inline Rng stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                      Stream purpose) {
  return Rng(stream_key(seed, a, b, purpose));
}

}  // namespace fedcl
