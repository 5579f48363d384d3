#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace swnf {

using Rng = std::mt19937_64;

// Independent generator for a named purpose ("batch", "noise", ...) derived
// from a run seed. Streams with different names never share state, so
// toggling one consumer does not shift the draws of another.
inline Rng make_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

}  // namespace swnf
