#pragma once

#include <optional>
#include <vector>

#include "ddwm/corruption.hpp"
#include "ddwm/rng.hpp"
#include "ddwm/schedule.hpp"
#include "ddwm/tokens.hpp"

namespace ddwm {

// Per-position logits over the m non-mask tokens (mask is never predicted).
struct LogitsGrid {
  int rows = 0, cols = 0, m = 0;
  std::vector<double> v;  // rows*cols*m, position-major

  LogitsGrid() = default;
  LogitsGrid(int rows_, int cols_, int m_)
      : rows(rows_), cols(cols_), m(m_),
        v(static_cast<size_t>(rows_) * cols_ * m_, 0.0) {}

  int positions() const { return rows * cols; }
  double& at(int flat, int tok) { return v[static_cast<size_t>(flat) * m + tok]; }
  double at(int flat, int tok) const { return v[static_cast<size_t>(flat) * m + tok]; }
};

// What a denoising network consumes: token frames, aligned lead-in actions
// (zeroed where conditioning is dropped), and the temporal visibility mask.
// frame_ids assigns each entry its temporal slot (empty = 0,1,2,...); the
// guided sampler appends an unconditional duplicate that shares the slot of
// the frame it guides.
struct DenoiserInput {
  std::vector<TokenGrid> frames;
  std::vector<Action> actions;
  TemporalMask mask;
  std::vector<int> query_frames;  // which frames need logits
  std::vector<int> frame_ids;     // temporal slot per frame; empty = identity

  int frame_id(int f) const { return frame_ids.empty() ? f : frame_ids[f]; }

  void validate() const;
};

// Interface the sampler drives. forward() must be const and safe to call
// concurrently from multiple threads.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::vector<LogitsGrid> forward(const DenoiserInput& in) const = 0;
  virtual Vocabulary vocab() const = 0;
  virtual int grid_rows() const = 0;
  virtual int grid_cols() const = 0;
  virtual int max_frames() const = 0;
};

struct SamplerConfig {
  int steps = 10;             // K
  double guidance = 0.0;      // w >= 0; 0 disables the unconditional pass
  int top_k = 3;              // x0 sampling pool per position
  bool confidence_from_topk = false;  // default: full-softmax log-prob
  bool resample_committed = true;     // false = frozen committed tokens (maskgit arm)
  MaskSchedule gamma;

  void validate() const;
};

// guided = cond + w * (cond - uncond), elementwise over matching shapes
LogitsGrid cfg_combine(const LogitsGrid& cond, const LogitsGrid& uncond, double w);

struct SampledX0 {
  TokenGrid tokens;
  std::vector<double> logp_full;  // log softmax over all m tokens
  std::vector<double> logp_topk;  // log of the renormalized top-k probability
};

// Per position: restrict to the top_k logits (ties to the lower token id),
// renormalize with softmax, sample. Errors on non-finite logits.
SampledX0 sample_x0(const LogitsGrid& logits, const Vocabulary& vocab, int top_k,
                    Rng& rng);

// One reverse step k+1 -> k: confidence l = logp + Gumbel(0,1) * (k/K),
// already-committed positions pinned to +infinity (represented as the largest
// finite double), keep the top ceil(gamma(k/K) * N) positions (ties to the
// lower flat index), everything else reverts to mask. Committed positions
// take the fresh x0 value when resample_committed, else keep their old value.
TokenGrid decode_step(const TokenGrid& x_next, const TokenGrid& x0_sample,
                      const std::vector<double>& logp, int k, int K,
                      const MaskSchedule& gamma, bool resample_committed, Rng& rng);

// optional per-step capture for tests and debugging
struct SampleTrace {
  std::vector<TokenGrid> steps;  // x_k after each reverse step, k = K-1..0
};

// Generate one future frame given clean context frames and the action leading
// into the new frame. guidance > 0 runs the conditional and unconditional
// branches in a single forward pass over T+1 frames with the extended mask.
TokenGrid sample_frame(const Denoiser& denoiser, const Trajectory& context,
                       const Action& next_action, const SamplerConfig& cfg, Rng& rng,
                       SampleTrace* trace = nullptr);

// Autoregressive rollout: append horizon predicted frames, one per supplied
// action. Errors if the growing context would exceed the denoiser's maximum
// temporal extent.
Trajectory rollout(const Denoiser& denoiser, const Trajectory& seed,
                   const std::vector<Action>& future_actions, const SamplerConfig& cfg,
                   Rng& rng);

}  // namespace ddwm
