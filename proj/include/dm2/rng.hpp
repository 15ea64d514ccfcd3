#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dm2 {

// Seeded random source. All draws go through the raw 64-bit engine output so
// sequences are bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int uniform_int(int n);

  // Standard normal via Box-Muller (no cached second value).
  double normal();

  // Index drawn from an (approximately) normalized probability vector.
  int categorical(std::span<const double> probs);

  // Independent child stream; the parent is not advanced.
  Rng fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dm2
