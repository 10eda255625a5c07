#pragma once

#include <cstdint>
#include <cstddef>

namespace bidex {

/// Counter-based deterministic random stream. Output depends only on
/// (seed, stream_id, call index), so equal construction plus equal call
/// sequences replay byte-identically on any platform with IEEE doubles.
/// Streams are single-owner: one per environment or worker, never shared.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_double();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n);
  /// Standard normal via Box-Muller; always consumes two uniforms so the
  /// stream state stays a plain counter.
  double next_gaussian();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  /// Child stream with an independent id derived from this stream's identity.
  RngStream substream(std::uint64_t key) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle of [0, n) driven by the given stream.
void shuffled_indices(std::size_t n, RngStream& rng, std::size_t* out);

}  // namespace bidex
