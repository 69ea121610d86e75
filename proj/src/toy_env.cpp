#include "ddwm/toy_env.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddwm {

void ToyDynamicsConfig::validate() const {
  if (rows < 2 || cols < 2) throw std::invalid_argument("ToyDynamicsConfig: grid too small");
  if (vocab_m < 2)
    throw std::invalid_argument("ToyDynamicsConfig: need at least background + one color");
  if (block_min < 1 || block_max < block_min)
    throw std::invalid_argument("ToyDynamicsConfig: bad block size range");
  if (block_max > rows || block_max > cols)
    throw std::invalid_argument("ToyDynamicsConfig: block does not fit the grid");
  if (vel_max < vel_min) throw std::invalid_argument("ToyDynamicsConfig: bad velocity range");
  if (frames < 1) throw std::invalid_argument("ToyDynamicsConfig: need at least one frame");
}

TokenGrid render_state(const ToyDynamicsConfig& cfg, const ToyState& s) {
  TokenGrid g(Vocabulary(cfg.vocab_m), cfg.rows, cfg.cols, 0);
  for (int r = s.r; r < s.r + s.side; ++r)
    for (int c = s.c; c < s.c + s.side; ++c) g.at(r, c) = s.color;
  return g;
}

namespace {

// reflect x into [0, hi] by folding at the walls
int reflect(int x, int hi) {
  if (hi == 0) return 0;
  const int period = 2 * hi;
  int y = x % period;
  if (y < 0) y += period;
  return y <= hi ? y : period - y;
}

}  // namespace

ToyState step_state(const ToyDynamicsConfig& cfg, const ToyState& s, const Action& a) {
  // translation lives at the pose's (dx, dy) slots; velocities are integer cells
  const int dx = static_cast<int>(std::lround(a[3]));
  const int dy = static_cast<int>(std::lround(a[7]));
  ToyState n = s;
  n.r = reflect(s.r + dy, cfg.rows - s.side);
  n.c = reflect(s.c + dx, cfg.cols - s.side);
  return n;
}

Trajectory generate_episode(const ToyDynamicsConfig& cfg, Rng& rng) {
  cfg.validate();
  ToyState s;
  s.side = static_cast<int>(rng.uniform_int(cfg.block_min, cfg.block_max));
  s.r = static_cast<int>(rng.uniform_int(0, cfg.rows - s.side));
  s.c = static_cast<int>(rng.uniform_int(0, cfg.cols - s.side));
  s.color = static_cast<int32_t>(rng.uniform_int(1, cfg.vocab_m - 1));

  Trajectory traj;
  traj.frames.push_back(render_state(cfg, s));
  traj.actions.push_back(zero_action());
  for (int f = 1; f < cfg.frames; ++f) {
    const double dx = static_cast<double>(rng.uniform_int(cfg.vel_min, cfg.vel_max));
    const double dy = static_cast<double>(rng.uniform_int(cfg.vel_min, cfg.vel_max));
    const Action a = translation_action(dx, dy);
    s = step_state(cfg, s, a);
    traj.frames.push_back(render_state(cfg, s));
    traj.actions.push_back(a);
  }
  return traj;
}

namespace {

ToyState state_from_frame(const TokenGrid& frame) {
  ToyState s;
  s.side = 0;
  int r0 = frame.rows, c0 = frame.cols, r1 = -1, c1 = -1;
  for (int r = 0; r < frame.rows; ++r)
    for (int c = 0; c < frame.cols; ++c) {
      if (frame.at(r, c) != 0) {
        r0 = std::min(r0, r);
        c0 = std::min(c0, c);
        r1 = std::max(r1, r);
        c1 = std::max(c1, c);
        s.color = frame.at(r, c);
      }
    }
  if (r1 < 0) throw std::invalid_argument("state_from_frame: frame has no block");
  s.r = r0;
  s.c = c0;
  s.side = r1 - r0 + 1;
  if (s.side != c1 - c0 + 1)
    throw std::invalid_argument("state_from_frame: block is not square");
  return s;
}

}  // namespace

std::vector<TokenGrid> simulate_continuation(const ToyDynamicsConfig& cfg,
                                             const TokenGrid& last_frame,
                                             const std::vector<Action>& actions) {
  ToyState s = state_from_frame(last_frame);
  std::vector<TokenGrid> out;
  out.reserve(actions.size());
  for (const Action& a : actions) {
    s = step_state(cfg, s, a);
    out.push_back(render_state(cfg, s));
  }
  return out;
}

double token_error(const std::vector<TokenGrid>& a, const std::vector<TokenGrid>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("token_error: frame count mismatch or empty");
  double wrong = 0.0, total = 0.0;
  for (size_t f = 0; f < a.size(); ++f) {
    if (a[f].size() != b[f].size())
      throw std::invalid_argument("token_error: frame shape mismatch");
    for (int i = 0; i < a[f].size(); ++i) {
      wrong += (a[f].tokens[i] != b[f].tokens[i]);
      total += 1.0;
    }
  }
  return wrong / total;
}

}  // namespace ddwm
