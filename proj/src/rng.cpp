#include "formnet/rng.hpp"

#include <cmath>

namespace formnet {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer.
std::uint64_t avalanche(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
  // Two avalanche rounds decorrelate (seed, stream) pairs before the
  // per-counter Weyl walk.
  base_ = avalanche(avalanche(seed + kGamma) +
                    (stream + 1) * 0xD1B54A32D192ED03ull);
}

std::uint64_t RngStream::at(std::uint64_t counter) const {
  return avalanche(base_ + (counter + 1) * kGamma);
}

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_unit();
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t bits;
  do {
    bits = next_u64();
  } while (bits >= limit);
  return bits % n;
}

double RngStream::normal() {
  // Box-Muller; u1 kept away from zero so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace formnet
