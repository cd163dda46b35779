#pragma once

#include <cstdint>
#include <string_view>

namespace scenefuse {

/// Counter-based 64-bit generator. Draw n of stream (seed, stream) is
///
///   splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0x9e3779b97f4a7c15) + n * 0x9e3779b97f4a7c15)
///
/// where splitmix64 is the SplitMix64 finaliser. Every value is a pure
/// function of (seed, stream, n), so draws can be addressed directly and do
/// not depend on evaluation order. Normals use Box-Muller on two consecutive
/// draws, uniforms take the top 53 bits.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t at(std::uint64_t counter) const;
  std::uint64_t next() { return at(counter_++); }
  void seek(std::uint64_t counter) { counter_ = counter; }
  std::uint64_t counter() const { return counter_; }

  /// [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a hash used to derive stream ids from labels.
std::uint64_t stream_id(std::string_view label);

}  // namespace scenefuse
