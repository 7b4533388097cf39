#pragma once

#include <array>
#include <cstdint>

namespace nce {

/// SplitMix64 finalizer; also used to derive per-replication seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Combines a base seed with a sequence of integer keys into a new seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key_a, std::uint64_t key_b = 0);

/// xoshiro256** generator seeded through SplitMix64. The draw sequence is a
/// pure function of the seed, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal deviate (Box-Muller; the second deviate of each pair is
  /// cached).
  double std_normal();

  std::uint64_t seed() const { return seed_; }
  /// Number of 64-bit words drawn so far.
  std::uint64_t position() const { return position_; }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nce
