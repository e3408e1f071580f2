#pragma once

#include <cstdint>
#include <random>

namespace dsmt {

// splitmix64 step; used to derive independent, reproducible seed streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed derived from a root seed plus stream labels, so each
// (sample, epoch, purpose) owns an independent generator regardless of
// worker scheduling.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(root ^ 0x6a09e667f3bcc909ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::uint64_t a = 0,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  return std::mt19937_64(derive_seed(root, a, b, c));
}

}  // namespace dsmt
