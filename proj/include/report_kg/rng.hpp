#pragma once

#include <cstdint>
#include <string_view>

namespace rkg {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the bytes, finished with mix64. Stable across platforms.
std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0);

// Combine two 64-bit values into one well-mixed key.
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

// Counter-based generator: the i-th draw is mix64(key, i). Streams are
// derived with split(), so any consumer can be reseeded from
// (global seed, tag...) without sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed)) {}

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; both variates are used.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  Rng split(std::uint64_t tag) const { return Rng(hash_combine(key_, tag), 0); }
  Rng split(std::string_view tag) const { return split(hash_string(tag)); }

  std::uint64_t key() const { return key_; }

 private:
  Rng(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rkg
