#pragma once

#include <optional>
#include <vector>

#include "ddwm/rng.hpp"
#include "ddwm/schedule.hpp"
#include "ddwm/tokens.hpp"

namespace ddwm {

// One frame's training corruption: the corrupted grid plus everything needed
// to reproduce or audit it.
struct CorruptionSample {
  TokenGrid corrupted;
  std::vector<int> masked_positions;  // flat indices set to mask
  std::vector<int> noised_positions;  // flat indices resampled uniformly
  double u0 = 1.0;                    // mask-level draw, gamma(u0) masked
  double u1 = 0.0;                    // noise-level draw, round(u1*eta*R) noised

  bool is_corrupted(int flat) const;  // masked or noised
};

// Corrupt a fully decoded grid: ceil(gamma(u0) * N) positions masked
// (uniform without replacement), then round(u1 * eta * R) of the remaining R
// resampled uniformly over the non-mask vocabulary (resampling may reproduce
// the original value). round() is banker's rounding (half to even).
CorruptionSample corrupt(const TokenGrid& x0, const MaskSchedule& gamma, double eta,
                         Rng& rng);
// deterministic variant used by tests and by corrupt() internally
CorruptionSample corrupt_with(const TokenGrid& x0, const MaskSchedule& gamma, double eta,
                              double u0, double u1, Rng& rng);

// Training objective mixture (50/40/10): predict the future given the past,
// denoise all frames jointly, or denoise each frame with no context.
enum class Objective { future_only, joint_past_future, per_frame_unconditional };

Objective sample_objective(Rng& rng);

// Which frames may attend to which during denoising.
enum class TemporalMaskMode { causal, identity, cfg_extended };

struct TemporalMask {
  int frames = 0;
  std::vector<uint8_t> allow;  // frames x frames, row = attending frame

  bool allowed(int from, int to) const {
    return allow[static_cast<size_t>(from) * frames + to] != 0;
  }
};

// causal: lower-triangular (inclusive). identity: diagonal only.
// cfg_extended: (T+1)x(T+1), causal over the first T rows/cols, the extra
// last frame sees only itself (the unconditional duplicate).
TemporalMask build_temporal_mask(int frames, TemporalMaskMode mode);

// A trajectory prepared for one training step.
struct ObjectiveApplication {
  Objective objective;
  TemporalMaskMode mask_mode;
  std::vector<CorruptionSample> samples;  // one per frame; context frames untouched
  std::vector<uint8_t> in_loss;           // per frame: counted in the loss?
  std::vector<uint8_t> corrupted_frame;   // per frame: was corruption applied?
  std::vector<uint8_t> drop_action;       // per frame: zero the action input?
  std::optional<int> split;               // future_only: first corrupted frame (0-based)
};

// future_only: split t drawn uniformly from the 2nd..T-th frame; earlier
// frames stay clean context. joint: every frame corrupted and in the loss,
// causal mask. per_frame: every frame corrupted and in the loss, identity
// mask, actions dropped (the unconditional model must not see them).
ObjectiveApplication apply_objective(const Trajectory& traj, Objective obj,
                                     const MaskSchedule& gamma, double eta, Rng& rng);

}  // namespace ddwm
