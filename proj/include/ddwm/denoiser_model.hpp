#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddwm/param_store.hpp"
#include "ddwm/sampler.hpp"
#include "ddwm/tokens.hpp"

namespace ddwm {

// Small trainable conditional token model: token/positional/action embeddings
// feeding a stack of blocks that alternate per-frame mixing (attention over
// the positions of one frame) with masked temporal mixing (attention over
// frames at a fixed position), followed by an MLP. Output logits are tied to
// the embedding table.
struct DenoiserModelConfig {
  int rows = 8;
  int cols = 8;
  int vocab_m = 8;
  int max_frames = 8;  // temporal positional-encoding extent
  int dim = 32;        // residual width
  int hidden = 64;     // MLP hidden width
  int blocks = 2;
  uint64_t init_seed = 0;

  void validate() const;
};

// Activation tape from one forward pass, consumed by backward().
struct DenoiserTape {
  int frames = 0;

  struct Block {
    // per-frame mixing
    std::vector<double> sp_xhat, sp_rstd;   // layer-norm internals
    std::vector<double> sp_q, sp_k, sp_v;   // (F*N) x d
    std::vector<double> sp_probs;           // F x N x N attention weights
    std::vector<double> sp_att;             // pre output-projection
    // temporal mixing
    std::vector<double> tm_xhat, tm_rstd;
    std::vector<double> tm_q, tm_k, tm_v;
    std::vector<double> tm_probs;           // N x F x F (zero where masked)
    std::vector<double> tm_att;
    // MLP
    std::vector<double> mlp_xhat, mlp_rstd;
    std::vector<double> mlp_pre;            // (F*N) x hidden, pre-ReLU
  };
  std::vector<Block> blocks;

  std::vector<double> fin_xhat, fin_rstd;
  std::vector<double> u;  // final normalized stream, feeds the tied readout
};

class DenoiserModel final : public Denoiser {
 public:
  explicit DenoiserModel(const DenoiserModelConfig& cfg);

  // Denoiser interface (thread-safe: read-only on parameters)
  std::vector<LogitsGrid> forward(const DenoiserInput& in) const override;
  Vocabulary vocab() const override { return Vocabulary(cfg_.vocab_m); }
  int grid_rows() const override { return cfg_.rows; }
  int grid_cols() const override { return cfg_.cols; }
  int max_frames() const override { return cfg_.max_frames; }

  const DenoiserModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Training path: logits for every frame, recording activations when a tape
  // is supplied.
  std::vector<LogitsGrid> forward_all(const DenoiserInput& in, DenoiserTape* tape) const;

  // Reverse-mode accumulation: d(loss)/d(logits) for every frame (same order
  // as forward_all) into a gradient buffer aligned with params().flat().
  void backward(const DenoiserInput& in, const DenoiserTape& tape,
                const std::vector<LogitsGrid>& dlogits, std::vector<double>* grad) const;

 private:
  struct BlockOffsets {
    size_t sp_ln_g, sp_ln_b, sp_wq, sp_bq, sp_wk, sp_bk, sp_wv, sp_bv, sp_wo;
    size_t tm_ln_g, tm_ln_b, tm_wq, tm_bq, tm_wk, tm_bk, tm_wv, tm_bv, tm_wo;
    size_t mlp_ln_g, mlp_ln_b, mlp_w1, mlp_w2;
  };

  void check_input(const DenoiserInput& in) const;

  DenoiserModelConfig cfg_;
  ParamStore params_;
  size_t emb_ = 0, sp_pe_ = 0, tm_pe_ = 0, act_proj_ = 0;
  size_t fin_ln_g_ = 0, fin_ln_b_ = 0;
  std::vector<BlockOffsets> offs_;
};

}  // namespace ddwm
