// Deterministic random number generation: stable across platforms and runs.
// std::<distribution> types are implementation-defined, so every draw used by
// the simulator goes through this module.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace svydr::rng {

// SplitMix64 finalizer (public-domain constants, Vigna/Steele).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stable seed derivation: child = derive_seed(parent, tag). Replication r of a
// run with seed S uses derive_seed(S, kRepBase + r); substreams within a
// replication derive again with the tags below.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(mix64(seed) ^ (0xD1B54A32D192ED03ull * (tag + 1)));
}

inline constexpr std::uint64_t kTagPopulation = 0x01;
inline constexpr std::uint64_t kTagOutcomes = 0x02;
inline constexpr std::uint64_t kTagSampleA = 0x03;
inline constexpr std::uint64_t kTagSampleB = 0x04;
inline constexpr std::uint64_t kTagFolds = 0x05;
inline constexpr std::uint64_t kTagActive = 0x06;
inline constexpr std::uint64_t kTagLearner = 0x07;
inline constexpr std::uint64_t kRepBase = 0x100;

// xoshiro256++ (Blackman & Vigna, public domain).
class Engine {
 public:
  explicit Engine(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) {
      sm += 0x9E3779B97F4A7C15ull;
      std::uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      w = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_;
};

// One RandomStream per logical stream of draws; cheap to construct.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_.next(); }

  // Uniform on [0, 1), 53-bit mantissa.
  double uniform() {
    return static_cast<double>(engine_.next() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((engine_.next() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; second value cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Gamma(shape, scale), Marsaglia-Tsang squeeze.
  double gamma(double shape, double scale);

  // Poisson(lambda) by Knuth's product method, chunked for large lambda.
  std::uint64_t poisson(double lambda);

  // Negative binomial parameterized by mean/variance (variance >= mean;
  // variance == mean degenerates to Poisson).
  std::uint64_t negative_binomial(double mean, double variance);

  // k distinct indices from {0, ..., n-1}, in random order.
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n,
                                                        std::uint32_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  Engine engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace svydr::rng
