#include "bidex/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bidex {

namespace {

// SplitMix64 finalizer; mixes one 64-bit word.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  return mix(mix(mix(seed_) ^ stream_id_) ^ c);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_below: n must be positive");
  // Rejection sampling removes modulo bias while staying counter-based.
  const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double RngStream::next_gaussian() {
  // Guard u1 away from zero so log stays finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::substream(std::uint64_t key) const {
  return RngStream(seed_, mix(stream_id_ ^ mix(key)));
}

void shuffled_indices(std::size_t n, RngStream& rng, std::size_t* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    const std::size_t tmp = out[i - 1];
    out[i - 1] = out[j];
    out[j] = tmp;
  }
}

}  // namespace bidex
