#pragma once

#include <cstdint>

namespace formnet {

/// Counter-based pseudo-random stream. Output j is a fixed avalanche of
/// (seed, stream, j), so any draw can be reproduced out of order and
/// parallel consumers of distinct streams never interact. The sequential
/// interface just advances an internal counter over the same mapping.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  /// Raw 64-bit draw at an explicit counter value (does not advance state).
  std::uint64_t at(std::uint64_t counter) const;

  std::uint64_t next_u64() { return at(counter_++); }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n) by rejection, exact for any n > 0.
  std::uint64_t uniform_below(std::uint64_t n);

  /// Standard normal via Box-Muller; consumes two counters per call.
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t base_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace formnet
