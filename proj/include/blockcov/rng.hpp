#pragma once

#include <cstdint>
#include <initializer_list>

namespace blockcov {

/// SplitMix64 finaliser.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: the same (base, counters...) always gives
/// the same stream seed, independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> counters) {
  std::uint64_t s = mix64(base);
  for (std::uint64_t c : counters) s = mix64(s ^ mix64(c + 0x632BE59BD9B4E019ULL));
  return s;
}

}  // namespace blockcov
