#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace flocksim {

/// 64-bit finalizer (splitmix64). Used to derive independent substream seeds
/// from a single root seed so that adding a consumer never shifts another
/// stream's sequence.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix64(root ^ mix64(stream ^ mix64(index)));
}

// Named stream tags. Values are arbitrary but frozen: changing them changes
// every seeded run.
namespace stream {
inline constexpr std::uint64_t kWorldSpawn = 0x01;
inline constexpr std::uint64_t kLeaderCommands = 0x02;
inline constexpr std::uint64_t kDisturbance = 0x03;
inline constexpr std::uint64_t kNetworkInit = 0x04;
inline constexpr std::uint64_t kExploration = 0x05;
inline constexpr std::uint64_t kReplaySampling = 0x06;
inline constexpr std::uint64_t kEpisodeSetup = 0x07;
inline constexpr std::uint64_t kEvalSetup = 0x08;
inline constexpr std::uint64_t kBaselinePolicy = 0x09;
}  // namespace stream

/// Seeded generator with hand-rolled distributions. std::mt19937_64 is fully
/// specified by the standard and the distributions below avoid the
/// implementation-defined std::*_distribution sequences, so identical seeds
/// give identical draws on any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
  }

  /// Standard normal via Box-Muller; consumes exactly two raw draws.
  double gaussian() {
    const double u1 =
        static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace flocksim
