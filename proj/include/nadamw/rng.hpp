#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace nadamw {

// One substream per (run, purpose): training draws, epoch shuffles and audit
// sampling never share generator state, and replays are exact for a given
// (master seed, run id, purpose).
enum class StreamPurpose : std::uint64_t {
  training = 0,
  shuffle = 1,
  audit = 2,
  misc = 3,
};

class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t run_id, StreamPurpose purpose) {
    const std::uint64_t p = static_cast<std::uint64_t>(purpose);
    std::seed_seq seq{
        static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
        static_cast<std::uint32_t>(run_id),      static_cast<std::uint32_t>(run_id >> 32),
        static_cast<std::uint32_t>(p)};
    engine_.seed(seq);
  }

  // [0, 1) with 53 random bits; the mapping is spelled out so the stream is a
  // pure function of the engine contract, not of library internals.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Box-Muller, two uniforms per draw, no cached spare. u1 is shifted into
  // (0, 1] to keep the log finite.
  double normal() {
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nadamw
