#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace attnviz {

// Deterministic 64-bit generator used everywhere randomness is needed.
//
// Seeding runs one splitmix64 mix over the user seed; the stream itself is
// xorshift64 with shift constants (13, 7, 17). Both are pure integer
// arithmetic, so a given seed produces the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;  // xorshift fixpoint guard
  }

  std::uint64_t next() {
    state_ ^= state_ << 13;
    state_ ^= state_ >> 7;
    state_ ^= state_ << 17;
    return state_;
  }

  // Uniform double in [0, 1), 53 mantissa bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift reduction, no modulo bias worth
  // caring about at these ranges.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Consumes exactly two draws per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used to derive independent named substreams from one seed.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Seed for the substream `name` of `seed`. Streams for distinct names are
// independent of each other and of which other streams exist, which is what
// lets differently-configured networks share identical common parameters.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  return Rng::splitmix64(seed ^ fnv1a64(name));
}

}  // namespace attnviz
