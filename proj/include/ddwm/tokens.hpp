#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ddwm {

// Discrete vocabulary of m real tokens {0..m-1} plus one mask token with
// index m. Data never contains the mask; corrupted/latent grids may.
struct Vocabulary {
  int m = 0;  // number of non-mask tokens

  explicit Vocabulary(int m_);
  Vocabulary() = default;

  int mask_index() const { return m; }
  int size() const { return m + 1; }  // states including mask
  bool is_mask(int tok) const { return tok == m; }
  bool valid_token(int tok) const { return tok >= 0 && tok <= m; }
};

// 2D grid of token ids (one BEV frame at toy scale).
struct TokenGrid {
  Vocabulary vocab;
  int rows = 0;
  int cols = 0;
  std::vector<int32_t> tokens;  // row-major, rows*cols entries

  TokenGrid() = default;
  TokenGrid(Vocabulary v, int rows_, int cols_, int32_t fill = 0);

  int size() const { return rows * cols; }
  int32_t& at(int r, int c) { return tokens[static_cast<size_t>(r) * cols + c]; }
  int32_t at(int r, int c) const { return tokens[static_cast<size_t>(r) * cols + c]; }

  int mask_count() const;
  bool fully_decoded() const { return mask_count() == 0; }
  // throws if any id is outside [0, m]
  void validate() const;
};

// Flattened 4x4 pose matrix, row-major. The all-zero vector is the null
// action (no conditioning information); real poses always have unit diagonal.
using Action = std::array<double, 16>;

Action zero_action();
// pose with identity rotation and translation (dx, dy, dz)
Action translation_action(double dx, double dy, double dz = 0.0);

// Time-ordered episode. actions[i] is the action leading *into* frames[i]
// (actions[0] is the null action: the first frame has no predecessor).
struct Trajectory {
  std::vector<TokenGrid> frames;
  std::vector<Action> actions;

  size_t length() const { return frames.size(); }
  void validate() const;  // shape and token-range checks
};

}  // namespace ddwm
