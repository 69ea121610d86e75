#pragma once

#include <vector>

#include "ddwm/rng.hpp"
#include "ddwm/tokens.hpp"
#include "ddwm/transition.hpp"

namespace ddwm {

// Fully tabulated single-token reverse model for enumeration-scale checks.
// x0_given[k-1][xk][t] = p(x0 = t | x_k = xk) at reverse step k, a proper
// distribution over the m non-mask tokens for every state xk. prior is the
// model's p(x_K) over all m+1 states.
struct TabularDenoiser {
  Vocabulary vocab;
  std::vector<std::vector<std::vector<double>>> x0_given;  // K x (m+1) x m
  std::vector<double> prior;                               // m+1

  int steps() const { return static_cast<int>(x0_given.size()); }
  void validate() const;
};

// random row-stochastic tables (strictly positive entries)
TabularDenoiser random_tabular_denoiser(Vocabulary vocab, int steps, Rng& rng);

// Tabular model whose x0-head equals the true backward conditional
// q(x0 | x_k) of the forward process applied to data_dist, and whose prior is
// the true q(x_K). Plugging it into the reverse chain reproduces q exactly.
TabularDenoiser exact_reverse_model(Vocabulary vocab, const NoiseSchedule& sched,
                                    const std::vector<double>& data_dist);

// Reverse-step kernel p(x_{k-1} = i | x_k = j), assembled by mixing the
// forward posteriors with the model's x0-head:
//   p(x_{k-1} | x_k) = sum_{x0~} q(x_{k-1} | x_k, x0~) p(x0~ | x_k).
// Terms with zero model mass are skipped; positive mass on an x0~ that cannot
// reach x_k is an error.
std::vector<double> reverse_step_distribution(const TabularDenoiser& model,
                                              const NoiseSchedule& sched, int k, int xk);

// log p(x_0) for a single-token chain, summing
// p(x_K) * prod_k p(x_{k-1} | x_k) over all latent paths. Refuses instances
// where (m+1)^K exceeds an enumeration bound.
double exact_log_likelihood(const TabularDenoiser& model, const NoiseSchedule& sched,
                            int x0);

// Per-sample decomposition of the reparameterized lower bound:
//   sum_k E_{q(x_k|x0)}[ log p(x0 | x_k) ] + C(x0)
// with
//   C(x0) = log q(x0) + E_{q(x_K|x0)}[ log p(x_K) - log q(x_K) ]
//           - sum_k E_{q(x_k|x0)}[ log q(x0 | x_k) ]
// evaluated exactly from the closed-form marginals. The middle term is the
// prior-mismatch correction that the textbook constant drops by assuming
// p(x_K) = q(x_K); keeping it makes the bound valid for arbitrary model
// priors. Its expectation under data_dist is the bound's right-hand side; the
// inequality against the exact log-likelihood holds in expectation over the
// data distribution (the derivation's final step marginalizes over it).
double elbo_bound(const TabularDenoiser& model, const NoiseSchedule& sched,
                  const std::vector<double>& data_dist, int x0);

// convenience: E_{data}[f(x0)] over non-mask tokens
double expected_elbo_bound(const TabularDenoiser& model, const NoiseSchedule& sched,
                           const std::vector<double>& data_dist);
double expected_log_likelihood(const TabularDenoiser& model, const NoiseSchedule& sched,
                               const std::vector<double>& data_dist);

}  // namespace ddwm
