#include "ddwm/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ddwm {

bool CorruptionSample::is_corrupted(int flat) const {
  return std::find(masked_positions.begin(), masked_positions.end(), flat) !=
             masked_positions.end() ||
         std::find(noised_positions.begin(), noised_positions.end(), flat) !=
             noised_positions.end();
}

namespace {

// first `count` entries of a uniform random permutation of `pool`
std::vector<int> draw_without_replacement(std::vector<int>& pool, int count, Rng& rng) {
  std::vector<int> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<size_t>(rng.uniform_int(i, static_cast<int64_t>(pool.size()) - 1));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace

CorruptionSample corrupt_with(const TokenGrid& x0, const MaskSchedule& gamma, double eta,
                              double u0, double u1, Rng& rng) {
  x0.validate();
  if (!x0.fully_decoded())
    throw std::invalid_argument("corrupt: input grid already contains mask tokens");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("corrupt: eta = " + std::to_string(eta) + " outside [0, 1]");
  if (!(u0 >= 0.0 && u0 <= 1.0) || !(u1 >= 0.0 && u1 <= 1.0))
    throw std::invalid_argument("corrupt: u draws outside [0, 1]");

  const int N = x0.size();
  CorruptionSample s;
  s.corrupted = x0;
  s.u0 = u0;
  s.u1 = u1;

  const int n_mask = static_cast<int>(std::ceil(gamma(u0) * N));
  std::vector<int> pool(N);
  for (int i = 0; i < N; ++i) pool[i] = i;
  s.masked_positions = draw_without_replacement(pool, n_mask, rng);
  for (int flat : s.masked_positions) s.corrupted.tokens[flat] = x0.vocab.mask_index();

  const int remaining = N - n_mask;
  // banker's rounding: nearbyint under the default FE_TONEAREST mode
  const int n_noise = static_cast<int>(std::nearbyint(u1 * eta * remaining));
  std::vector<int> rest(pool.begin() + n_mask, pool.end());
  s.noised_positions = draw_without_replacement(rest, n_noise, rng);
  for (int flat : s.noised_positions) {
    // uniform over all non-mask codes; may reproduce the original value
    s.corrupted.tokens[flat] =
        static_cast<int32_t>(rng.uniform_int(0, x0.vocab.m - 1));
  }
  return s;
}

CorruptionSample corrupt(const TokenGrid& x0, const MaskSchedule& gamma, double eta,
                         Rng& rng) {
  const double u0 = rng.uniform();
  const double u1 = rng.uniform();
  return corrupt_with(x0, gamma, eta, u0, u1, rng);
}

Objective sample_objective(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.5) return Objective::future_only;
  if (u < 0.9) return Objective::joint_past_future;
  return Objective::per_frame_unconditional;
}

TemporalMask build_temporal_mask(int frames, TemporalMaskMode mode) {
  if (frames < 1) throw std::invalid_argument("build_temporal_mask: frames must be >= 1");
  TemporalMask m;
  const int n = (mode == TemporalMaskMode::cfg_extended) ? frames + 1 : frames;
  m.frames = n;
  m.allow.assign(static_cast<size_t>(n) * n, 0);
  auto set = [&](int i, int j) { m.allow[static_cast<size_t>(i) * n + j] = 1; };
  switch (mode) {
    case TemporalMaskMode::causal:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) set(i, j);
      break;
    case TemporalMaskMode::identity:
      for (int i = 0; i < n; ++i) set(i, i);
      break;
    case TemporalMaskMode::cfg_extended:
      // causal block over the real frames; the appended duplicate frame is
      // isolated so its logits are the unconditional branch
      for (int i = 0; i < frames; ++i)
        for (int j = 0; j <= i; ++j) set(i, j);
      set(frames, frames);
      break;
  }
  return m;
}

ObjectiveApplication apply_objective(const Trajectory& traj, Objective obj,
                                     const MaskSchedule& gamma, double eta, Rng& rng) {
  traj.validate();
  const int T = static_cast<int>(traj.length());
  if (T < 1) throw std::invalid_argument("apply_objective: empty trajectory");

  ObjectiveApplication app;
  app.objective = obj;
  app.samples.reserve(T);
  app.in_loss.assign(T, 0);
  app.corrupted_frame.assign(T, 0);
  app.drop_action.assign(T, 0);

  auto untouched = [&](int f) {
    CorruptionSample s;
    s.corrupted = traj.frames[f];
    s.u0 = 1.0;
    s.u1 = 0.0;
    return s;
  };

  switch (obj) {
    case Objective::future_only: {
      if (T < 2)
        throw std::invalid_argument(
            "apply_objective: future_only needs at least two frames");
      const int split = static_cast<int>(rng.uniform_int(1, T - 1));
      app.split = split;
      app.mask_mode = TemporalMaskMode::causal;
      for (int f = 0; f < T; ++f) {
        if (f < split) {
          app.samples.push_back(untouched(f));
        } else {
          app.samples.push_back(corrupt(traj.frames[f], gamma, eta, rng));
          app.in_loss[f] = 1;
          app.corrupted_frame[f] = 1;
        }
      }
      break;
    }
    case Objective::joint_past_future: {
      app.mask_mode = TemporalMaskMode::causal;
      for (int f = 0; f < T; ++f) {
        app.samples.push_back(corrupt(traj.frames[f], gamma, eta, rng));
        app.in_loss[f] = 1;
        app.corrupted_frame[f] = 1;
      }
      break;
    }
    case Objective::per_frame_unconditional: {
      app.mask_mode = TemporalMaskMode::identity;
      for (int f = 0; f < T; ++f) {
        app.samples.push_back(corrupt(traj.frames[f], gamma, eta, rng));
        app.in_loss[f] = 1;
        app.corrupted_frame[f] = 1;
        app.drop_action[f] = 1;  // unconditional: no action conditioning
      }
      break;
    }
  }
  return app;
}

}  // namespace ddwm
