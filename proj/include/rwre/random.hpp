#pragma once

#include <cstdint>
#include <random>

namespace rwre {

/// Seeded random stream. Independent replicate streams are derived from a
/// master seed and a replicate index, so results do not depend on which
/// thread runs which replicate.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) { reseed(seed, 0); }

  RandomStream(std::uint64_t master, std::uint64_t index) { reseed(master, index); }

  static RandomStream substream(std::uint64_t master, std::uint64_t index) {
    return RandomStream(master, index);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double gamma(double shape) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  void reseed(std::uint64_t master, std::uint64_t index) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
        std::uint32_t{0x52575245}};  // stream domain tag
    engine_.seed(seq);
  }

  std::mt19937_64 engine_;
};

/// Mixes two indices into one substream index (for nested replicate loops).
inline std::uint64_t mix_index(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x7f4a7c15ULL;
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  return z;
}

}  // namespace rwre
