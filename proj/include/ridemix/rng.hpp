#pragma once

#include <cstdint>

namespace ridemix {

// splitmix64 finaliser, used as the mixing function of the counter-based streams.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream. Draw k of round t in run r is a pure function of
/// (seed, r, t, k), so ensembles do not depend on scheduling or run order.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix64(mix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL))) {
    seek(0);
  }

  // Positions the stream at the start of `round`.
  constexpr void seek(std::uint64_t round) noexcept {
    round_key_ = mix64(key_ ^ mix64(round + 0x2545f4914f6cdd1dULL));
    draw_ = 0;
  }

  constexpr std::uint64_t next_u64() noexcept { return mix64(round_key_ + ++draw_ * 0x9e3779b97f4a7c15ULL); }

  // Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    for (;;) {
      unsigned __int128 prod = static_cast<unsigned __int128>(next_u64()) * bound;
      auto low = static_cast<std::uint64_t>(prod);
      if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(prod >> 64);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t round_key_ = 0;
  std::uint64_t draw_ = 0;
};

}  // namespace ridemix
