#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ddwm {

// Mask-fraction curve gamma(u): fraction of tokens still masked at progress
// u in [0,1]. Monotone non-increasing with gamma(1) = 0. Serialized by id so
// configs stay plain data.
struct MaskSchedule {
  enum class Kind { cosine } kind = Kind::cosine;

  double operator()(double u) const;

  std::string id() const { return "cosine"; }
  static MaskSchedule from_id(const std::string& id);
};

// gamma(u) = cos(u * pi / 2)
double cosine_mask_fraction(double u);

// Resampling-rate schedule beta_k = 1 / (K/eta - k + 1), k = 1..K.
// Telescopes so that 1 - prod_{s<=k}(1 - beta_s) = eta * k / K: the
// cumulative noised fraction grows linearly to eta.
std::vector<double> uniform_schedule(int steps, double eta);

// Masking-rate schedule from the cosine survival curve
// abar_k = cos((k/K) * pi/2), alpha_k = 1 - abar_k / abar_{k-1} (abar_0 = 1).
// abar_K = 0, so alpha_K = 1 and the final forward state is all-mask.
std::vector<double> absorbing_schedule(int steps);

}  // namespace ddwm
