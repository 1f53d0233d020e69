#pragma once

#include <cstdint>
#include <limits>

namespace rmlab {

// Counter-based random stream. The n-th output is a pure function of
// (seed, stream_id, n), so two streams with the same key replay the same
// sequence and sub-streams can be derived for any logical sampling site
// (epoch, sample index, trial, ...) without threading state between them.
//
// The generator is a keyed SplitMix64-style hash of the counter. It is not
// cryptographic.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform on (0, 1); safe to pass to log().
  double uniform_open() noexcept;
  // Standard normal via Box-Muller (two counter steps per draw).
  double normal() noexcept;
  // Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Independent child stream keyed by one or two extra words.
  RngStream derive(std::uint64_t a) const noexcept;
  RngStream derive(std::uint64_t a, std::uint64_t b) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

// Well-known stream ids so every sampling site in the library is distinct.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kRegroup = 6;
inline constexpr std::uint64_t kMixup = 7;
inline constexpr std::uint64_t kVerify = 8;
}  // namespace streams

}  // namespace rmlab
