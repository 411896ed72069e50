#pragma once

#include <cstdint>
#include <limits>

namespace cagemap {

/// xoshiro256++ seeded through splitmix64. Satisfies UniformRandomBitGenerator.
///
/// Simulations never share a generator across workers: each replicate (or grid
/// point) derives its own stream with `substream`, so results depend only on
/// (seed, stream, index) and not on scheduling.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  /// Independent stream keyed by (seed, stream, index).
  static Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Uniform on [lo, hi); returns lo when hi == lo.
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

// Stream ids used with Rng::substream.
namespace streams {
inline constexpr std::uint64_t kBootstrap = 0xB0075;
inline constexpr std::uint64_t kUpperBound = 0xB0D;
inline constexpr std::uint64_t kFolds = 0xF01D;
inline constexpr std::uint64_t kQueue = 0x9E0E;
}  // namespace streams

}  // namespace cagemap
