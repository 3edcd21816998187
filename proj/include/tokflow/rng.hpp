#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tokflow {

// Counter-based deterministic generator. Output depends only on (seed, counter),
// so streams can be split, replayed, and compared across platforms.
class RngStream {
 public:
  explicit RngStream(uint64_t seed = 0, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64() {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * (counter_++ + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller. One draw consumes two uniforms; the sine
  // half is discarded so the stream stays purely counter-indexed.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Derive an independent child stream from a label.
  RngStream sub(std::string_view label) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return RngStream(seed_ ^ (h | 1ull), 0);
  }

  RngStream sub(uint64_t tag) const {
    uint64_t z = (seed_ ^ 0x6a09e667f3bcc909ull) + 0x9e3779b97f4a7c15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return RngStream(z ^ (z >> 31), 0);
  }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace tokflow
