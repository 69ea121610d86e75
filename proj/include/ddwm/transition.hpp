#pragma once

#include <vector>

#include "ddwm/tokens.hpp"

namespace ddwm {

// Dense row-stochastic transition matrix over the m+1 token states (mask
// last). Rows index the source state, columns the destination. Materialized
// densely only for m <= kDenseVocabCap; larger vocabularies must use the
// coefficient form below.
inline constexpr int kDenseVocabCap = 1024;

struct TransitionMatrix {
  Vocabulary vocab;
  std::vector<double> p;  // (m+1)*(m+1), row-major

  TransitionMatrix() = default;
  explicit TransitionMatrix(Vocabulary v);

  int n() const { return vocab.size(); }
  double& at(int i, int j) { return p[static_cast<size_t>(i) * n() + j]; }
  double at(int i, int j) const { return p[static_cast<size_t>(i) * n() + j]; }

  // row sums within 1e-12 of 1, entries in [0,1], mask row absorbing
  void validate() const;
};

TransitionMatrix matmul(const TransitionMatrix& a, const TransitionMatrix& b);
double max_abs_diff(const TransitionMatrix& a, const TransitionMatrix& b);

// Per-step masking kernel: (1-alpha) I + alpha 1 e_m^T. alpha in [0,1].
TransitionMatrix absorbing_step(Vocabulary vocab, double alpha);

// Per-step resampling kernel: (1-beta) I + beta (e_m e_m^T + (1/M)(1-e_m)(1-e_m)^T).
TransitionMatrix uniform_step(Vocabulary vocab, double beta);

// Combined per-step kernel: block matrix with off-diagonal nu = beta/M,
// diagonal omega + nu with omega = 1 - beta - alpha, mask column alpha.
// Algebraically Block(alpha, beta) = absorbing_step(alpha) * uniform_step(beta / (1 - alpha)):
// the commuting absorbing/uniform factorization holds exactly with the
// uniform rate rescaled by the survival probability.
TransitionMatrix combined_step(Vocabulary vocab, double alpha, double beta);

// Per-step masking/resampling rates for a K-step forward process.
// Constructor rejects (does not clamp) any alpha_k + beta_k > 1.
struct NoiseSchedule {
  std::vector<double> alpha;  // alpha[k-1] = masking rate at step k, k = 1..K
  std::vector<double> beta;   // beta[k-1]  = resampling rate at step k

  NoiseSchedule() = default;
  NoiseSchedule(std::vector<double> alpha_, std::vector<double> beta_);

  int steps() const { return static_cast<int>(alpha.size()); }
};

// Cumulative kernel Q̄_k in closed form:
//   omega_bar = prod_{s<=k} (1 - beta_s - alpha_s)   survive both channels
//   chi_bar   = 1 - prod_{s<=k} (1 - alpha_s)        ever masked
//   nu_bar    = (1 - omega_bar - chi_bar) / M        landed on a given token
// Valid for any vocabulary size; probabilities are read off without
// materializing the matrix. k = 0 gives the identity kernel.
struct CumulativeCoeffs {
  double omega_bar = 1.0;
  double chi_bar = 0.0;
  double nu_bar = 0.0;

  // entry [x0, xk] of Q̄_k
  double prob(const Vocabulary& vocab, int x0, int xk) const;
};

CumulativeCoeffs cumulative_coeffs(Vocabulary vocab, const NoiseSchedule& sched, int k);

// entry [i, j] of the combined per-step kernel, without materialization
double step_prob(Vocabulary vocab, double alpha, double beta, int i, int j);

// Dense Q̄_k from the closed form (errors above kDenseVocabCap).
TransitionMatrix cumulative(Vocabulary vocab, const NoiseSchedule& sched, int k);

// One-step posterior q(x_{k-1} = i | x_k, x_0) as a length-(m+1) probability
// vector, via the matrix-form ratio Q̄_{k-1}[x0, i] * Q_k[i, xk] / Q̄_k[x0, xk].
// A zero denominator (x_k unreachable from x_0) is a hard error naming the pair.
std::vector<double> posterior(Vocabulary vocab, const NoiseSchedule& sched,
                              int k, int xk, int x0);

}  // namespace ddwm
