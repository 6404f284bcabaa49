#pragma once

#include <cmath>
#include <cstdint>

namespace cascade {

// Counter-based splittable generator. Every draw is a pure function of
// (key, counter), so independent streams never share state and coupled
// consumers (e.g. adjacent MLMC levels) can replay identical noise.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child key for a named substream.
inline std::uint64_t rng_split(std::uint64_t key, std::uint64_t stream) {
  return splitmix64(key ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  CounterRng split(std::uint64_t stream) const { return CounterRng(rng_split(key_, stream)); }

  std::uint64_t bits(std::uint64_t counter) const { return splitmix64(key_ ^ splitmix64(counter)); }

  /// Uniform draw in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in (0, 1]; safe as a log() argument.
  double uniform_open(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on counters (2c, 2c+1).
  double normal(std::uint64_t counter) const {
    const double u1 = uniform_open(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return bits(counter) % n;
  }

  // Stateful convenience: advances an internal counter.
  double next_uniform() { return uniform(counter_++); }
  double next_normal() { return normal(counter_++); }
  std::uint64_t next_below(std::uint64_t n) { return below(counter_++, n); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cascade
