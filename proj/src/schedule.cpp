#include "ddwm/schedule.hpp"

#include <cmath>

namespace ddwm {

double MaskSchedule::operator()(double u) const {
  switch (kind) {
    case Kind::cosine:
      return cosine_mask_fraction(u);
  }
  throw std::logic_error("MaskSchedule: unknown kind");
}

MaskSchedule MaskSchedule::from_id(const std::string& id) {
  if (id == "cosine") return MaskSchedule{Kind::cosine};
  throw std::invalid_argument("MaskSchedule: unknown id '" + id + "'");
}

double cosine_mask_fraction(double u) {
  if (!(u >= 0.0 && u <= 1.0))
    throw std::invalid_argument("cosine_mask_fraction: u = " + std::to_string(u) +
                                " outside [0, 1]");
  if (u == 1.0) return 0.0;  // cos(pi/2) rounds to 6e-17, which ceil() would turn into 1 token
  return std::cos(u * M_PI / 2.0);
}

std::vector<double> uniform_schedule(int steps, double eta) {
  if (steps < 1) throw std::invalid_argument("uniform_schedule: steps must be >= 1");
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::invalid_argument("uniform_schedule: eta = " + std::to_string(eta) +
                                " outside (0, 1]");
  std::vector<double> beta(steps);
  const double koe = static_cast<double>(steps) / eta;
  for (int k = 1; k <= steps; ++k) beta[k - 1] = 1.0 / (koe - k + 1.0);
  return beta;
}

std::vector<double> absorbing_schedule(int steps) {
  if (steps < 1) throw std::invalid_argument("absorbing_schedule: steps must be >= 1");
  std::vector<double> alpha(steps);
  double abar_prev = 1.0;
  for (int k = 1; k <= steps; ++k) {
    const double abar = std::cos(static_cast<double>(k) / steps * M_PI / 2.0);
    alpha[k - 1] = 1.0 - abar / abar_prev;
    abar_prev = abar;
  }
  alpha[steps - 1] = 1.0;  // abar_K = cos(pi/2) is 0 up to rounding; pin exactly
  return alpha;
}

}  // namespace ddwm
