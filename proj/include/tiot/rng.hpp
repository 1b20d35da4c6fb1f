#pragma once

#include <cstdint>
#include <random>

namespace tiot {

// Seedable RNG wrapper. mt19937_64 output is specified by the standard, and
// draws go through plain modulo reduction instead of std::uniform_int_distribution,
// whose algorithm varies between standard libraries. Same seed, same stream,
// on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform draw in [lo, hi], inclusive. Modulo bias is irrelevant at the
  // range sizes used here (< 2^16 against a 64-bit stream).
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) {
    if (hi <= lo) return lo;
    return lo + engine_() % (hi - lo + 1);
  }

  // Derive an independent stream, e.g. one per subsystem.
  Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tiot
