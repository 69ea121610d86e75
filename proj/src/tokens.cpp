#include "ddwm/tokens.hpp"

#include <stdexcept>
#include <string>

namespace ddwm {

Vocabulary::Vocabulary(int m_) : m(m_) {
  if (m < 1) throw std::invalid_argument("Vocabulary: need at least one non-mask token");
}

TokenGrid::TokenGrid(Vocabulary v, int rows_, int cols_, int32_t fill)
    : vocab(v), rows(rows_), cols(cols_) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("TokenGrid: non-positive dimensions");
  tokens.assign(static_cast<size_t>(rows) * cols, fill);
}

int TokenGrid::mask_count() const {
  int n = 0;
  for (int32_t t : tokens) n += (t == vocab.mask_index());
  return n;
}

void TokenGrid::validate() const {
  if (static_cast<int>(tokens.size()) != rows * cols)
    throw std::invalid_argument("TokenGrid: token buffer size mismatch");
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (!vocab.valid_token(tokens[i]))
      throw std::invalid_argument("TokenGrid: token id " + std::to_string(tokens[i]) +
                                  " at flat index " + std::to_string(i) +
                                  " outside [0, " + std::to_string(vocab.mask_index()) + "]");
  }
}

Action zero_action() {
  Action a{};
  a.fill(0.0);
  return a;
}

Action translation_action(double dx, double dy, double dz) {
  Action a = zero_action();
  a[0] = a[5] = a[10] = a[15] = 1.0;  // identity rotation block
  a[3] = dx;
  a[7] = dy;
  a[11] = dz;
  return a;
}

void Trajectory::validate() const {
  if (actions.size() != frames.size())
    throw std::invalid_argument("Trajectory: actions must align 1:1 with frames (lead-in convention)");
  for (const auto& f : frames) f.validate();
  if (frames.empty()) return;
  for (const auto& f : frames) {
    if (f.rows != frames[0].rows || f.cols != frames[0].cols ||
        f.vocab.m != frames[0].vocab.m)
      throw std::invalid_argument("Trajectory: frames disagree on shape or vocabulary");
  }
}

}  // namespace ddwm
