#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace randconv {

// SplitMix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Hash a root seed together with a path of stream ids, e.g. (seed, image, sample).
inline std::uint64_t derive_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> ids) {
  std::uint64_t key = mix64(seed);
  for (std::uint64_t id : ids) key = mix64(key ^ mix64(id + 0x632BE59BD9B4E019ULL));
  return key;
}

// Random stream. Each stream is keyed by a 64-bit value produced by
// derive_stream, so streams for distinct (image, sample) pairs never share
// state and can be consumed from any thread.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key), engine_(mix64(key)) {}

  std::uint64_t key() const { return key_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  // Child stream; does not disturb this stream's sequence.
  Rng split(std::uint64_t id) const { return Rng(derive_stream(key_, {id})); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace randconv
