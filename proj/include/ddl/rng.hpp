#ifndef DDL_RNG_HPP
#define DDL_RNG_HPP

#include <cstdint>
#include <random>

namespace ddl {

// Independent generator streams per consumer, so that one user seed never
// makes two components draw the same numbers.
enum class RngStream : std::uint32_t { DictionaryInit = 1, Synthetic = 2, Split = 3 };

inline std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace ddl

#endif  // DDL_RNG_HPP
