#pragma once

#include <cstdint>

namespace ctmpc {

// splitmix64: tiny, platform-stable generator. All randomness in this
// project flows through these helpers so that runs are reproducible
// byte-for-byte from a scenario seed alone.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

// Sequential stream (used by the simulator's disturbance sampling).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed, 0x243f6a8885a308d3ULL)) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform draw in [0, n). Modulo bias is below 1e-18 for the small n
  // used here (action counts, disturbance box widths).
  std::uint64_t bounded(std::uint64_t n) { return n <= 1 ? 0 : next_u64() % n; }

  // Uniform integer in [lo, hi], inclusive.
  long long range(long long lo, long long hi) {
    return lo + static_cast<long long>(bounded(static_cast<std::uint64_t>(hi - lo + 1)));
  }

 private:
  std::uint64_t state_;
};

// Counter-based draw: a pure function of (base, a, b, c). Controllers use
// this for their randomized plan tails so that the amount of randomness
// consumed per step never depends on how many candidate sub-problems were
// solved within that step.
inline std::uint64_t hash_draw(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
  return mix64(mix64(mix64(base, a), b), c);
}

namespace stream {
// Stream tags keep the simulator and controller draws independent.
constexpr std::uint64_t kDisturbance = 0xd15742bce5ULL;
constexpr std::uint64_t kController = 0xc0472011e2ULL;
constexpr std::uint64_t kTail = 0x7a11ULL;
constexpr std::uint64_t kWarm = 0x3a23ULL;
}  // namespace stream

// Seed of the per-unit controller stream. The centralized controller is
// unit 0; a decentralized deployment with a single unit therefore shares
// its stream, which makes the two schemes coincide exactly in that case.
inline std::uint64_t controller_stream(std::uint64_t scenario_seed, int unit_index) {
  return mix64(mix64(scenario_seed, stream::kController),
               static_cast<std::uint64_t>(unit_index));
}

}  // namespace ctmpc
