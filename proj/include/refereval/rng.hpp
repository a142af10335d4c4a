#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace refereval {

using Engine = std::mt19937_64;

// Stream tags. A stream is identified by the master seed plus a path of
// integers, so the seed of every generator is independent of scheduling.
namespace stream {
inline constexpr std::uint64_t kInstance = 1;
inline constexpr std::uint64_t kEvalBatch = 2;
inline constexpr std::uint64_t kHuman = 3;
inline constexpr std::uint64_t kStaticSamples = 4;
inline constexpr std::uint64_t kBlindSelect = 5;
inline constexpr std::uint64_t kTasks = 6;
inline constexpr std::uint64_t kRoundOrder = 7;
inline constexpr std::uint64_t kAutoResolve = 8;
inline constexpr std::uint64_t kParticipant = 9;
}  // namespace stream

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ULL));
  return s;
}

inline Engine make_stream(std::uint64_t master,
                          std::initializer_list<std::uint64_t> path) {
  return Engine(derive_seed(master, path));
}

}  // namespace refereval
