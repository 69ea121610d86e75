#include "ddwm/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ddwm {

uint64_t Rng::mix(uint64_t z) {
  // splitmix64 finalizer; decorrelates small/sequential seeds
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) throw std::invalid_argument("Rng::uniform_int: lo > hi");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<int64_t>(engine_());  // full range
  // rejection sampling for an unbiased draw
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<int64_t>(x % span);
}

double Rng::normal() {
  // Box-Muller, cosine branch only (one normal per two uniforms, stateless)
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gumbel() {
  double u = uniform();
  if (u < 1e-12) u = 1e-12;
  if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
  return -std::log(-std::log(u));
}

Rng Rng::substream(uint64_t id) const {
  return Rng(mix(seed_ ^ (0x517cc1b727220a95ULL + id * 0x2545f4914f6cdd1dULL)));
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << seed_ << ' ' << engine_;
  return os.str();
}

void Rng::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> seed_ >> engine_;
  if (!is) throw std::runtime_error("Rng::load_state: malformed state string");
}

}  // namespace ddwm
