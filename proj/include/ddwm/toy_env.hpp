#pragma once

#include "ddwm/rng.hpp"
#include "ddwm/tokens.hpp"

namespace ddwm {

// Synthetic dynamics playground: a single colored square block translating
// over a background of token 0, bouncing off the grid edges. Deterministic
// given the initial state and the per-step actions, so rollouts can be scored
// against the simulator exactly.
struct ToyDynamicsConfig {
  int rows = 8;
  int cols = 8;
  int vocab_m = 8;        // tokens 0..m-1, background = 0, block color in [1, m-1]
  int block_min = 2;      // inclusive block side range
  int block_max = 2;
  int vel_min = -2;       // inclusive per-axis velocity range
  int vel_max = 2;
  int frames = 6;

  void validate() const;
};

// Episode state: block anchor (top-left), side, and color.
struct ToyState {
  int r = 0, c = 0;
  int side = 1;
  int32_t color = 1;
};

TokenGrid render_state(const ToyDynamicsConfig& cfg, const ToyState& s);

// Advance one step: the anchor moves by (dy, dx) from the action's
// translation entries and reflects off the walls so the block stays inside.
ToyState step_state(const ToyDynamicsConfig& cfg, const ToyState& s, const Action& a);

// Random initial state + random per-step integer velocities, rendered to a
// token trajectory with aligned lead-in actions (actions[0] is null).
Trajectory generate_episode(const ToyDynamicsConfig& cfg, Rng& rng);

// Ground-truth continuation of an episode prefix under the supplied actions;
// used to score predicted rollouts. `state` is recovered from the last frame.
std::vector<TokenGrid> simulate_continuation(const ToyDynamicsConfig& cfg,
                                             const TokenGrid& last_frame,
                                             const std::vector<Action>& actions);

// fraction of mismatched tokens, averaged over the frame pairs
double token_error(const std::vector<TokenGrid>& a, const std::vector<TokenGrid>& b);

}  // namespace ddwm
