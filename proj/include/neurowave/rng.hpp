#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace neurowave {

// splitmix64 mixing step (Steele, Lea & Flood). Used to expand seeds and to
// derive independent stream seeds; never used as the main generator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives a stream seed from a base seed and up to two stream indices.
// Unrelated (stream, substream) pairs give unrelated seeds, so per-trial or
// per-config generators can run in any order without sharing state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t substream = 0) {
  std::uint64_t s = base;
  s ^= splitmix64(stream);
  std::uint64_t t = s + 0x9E3779B97F4A7C15ull * (substream + 1);
  return splitmix64(t);
}

// xoshiro256** 1.0 (Blackman & Vigna, public domain reference implementation),
// seeded through splitmix64. All randomness in the project flows through this
// generator so results reproduce bit-for-bit across platforms; the standard
// library distributions are deliberately avoided because their output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
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

  // Uniform double in [0, 1), 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); modulo bias removed by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::runtime_error("Rng::below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; the sine half of the pair is discarded to
  // keep the draw count per call fixed.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Fisher-Yates shuffle driven by below(); stable across platforms.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace neurowave
