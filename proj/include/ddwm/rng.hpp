#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ddwm {

// Deterministic RNG used everywhere. Wraps mt19937_64 but derives all doubles
// directly from the raw engine output so results do not depend on libstdc++
// distribution internals. Same build + same seed => same stream.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  // uniform in [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // uniform integer in [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi);

  // standard normal via Box-Muller (no cached spare, deterministic)
  double normal();

  // Gumbel(0,1) = -log(-log(U)) with U clamped away from {0,1}
  double gumbel();

  // Independent child stream keyed on (construction seed, id): stable no
  // matter how many draws the parent has made. Used for per-episode /
  // per-worker determinism.
  Rng substream(uint64_t id) const;

  // serialization for bit-exact training resume
  std::string save_state() const;
  void load_state(const std::string& s);

 private:
  static uint64_t mix(uint64_t z);  // splitmix64 finalizer
  uint64_t seed_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace ddwm
