#include "ddwm/likelihood.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ddwm {

namespace {

constexpr double kEnumerationBound = 1e6;  // max latent paths (m+1)^K

void check_data_dist(const Vocabulary& vocab, const std::vector<double>& d) {
  if (static_cast<int>(d.size()) != vocab.m)
    throw std::invalid_argument("data distribution must cover exactly the non-mask tokens");
  double s = 0.0;
  for (double p : d) {
    if (p < 0.0) throw std::invalid_argument("data distribution has a negative entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("data distribution sums to " + std::to_string(s));
}

void check_enumerable(const Vocabulary& vocab, int steps) {
  const double paths = std::pow(static_cast<double>(vocab.size()), steps);
  if (paths > kEnumerationBound)
    throw std::runtime_error("state space too large for exact enumeration: (m+1)^K = " +
                             std::to_string(paths) + " exceeds bound " +
                             std::to_string(kEnumerationBound));
}

}  // namespace

void TabularDenoiser::validate() const {
  if (x0_given.empty()) throw std::invalid_argument("TabularDenoiser: zero steps");
  const int n = vocab.size();
  if (static_cast<int>(prior.size()) != n)
    throw std::invalid_argument("TabularDenoiser: prior size mismatch");
  double ps = 0.0;
  for (double p : prior) {
    if (p < 0.0) throw std::invalid_argument("TabularDenoiser: negative prior entry");
    ps += p;
  }
  if (std::abs(ps - 1.0) > 1e-9)
    throw std::invalid_argument("TabularDenoiser: prior sums to " + std::to_string(ps));
  for (const auto& per_state : x0_given) {
    if (static_cast<int>(per_state.size()) != n)
      throw std::invalid_argument("TabularDenoiser: table state-count mismatch");
    for (const auto& row : per_state) {
      if (static_cast<int>(row.size()) != vocab.m)
        throw std::invalid_argument("TabularDenoiser: x0 rows must cover non-mask tokens");
      double s = 0.0;
      for (double p : row) {
        if (p < 0.0) throw std::invalid_argument("TabularDenoiser: negative table entry");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument("TabularDenoiser: table row sums to " + std::to_string(s));
    }
  }
}

TabularDenoiser random_tabular_denoiser(Vocabulary vocab, int steps, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("random_tabular_denoiser: steps must be >= 1");
  TabularDenoiser model;
  model.vocab = vocab;
  model.x0_given.assign(steps, std::vector<std::vector<double>>(
                                   vocab.size(), std::vector<double>(vocab.m, 0.0)));
  for (auto& per_state : model.x0_given)
    for (auto& row : per_state) {
      double s = 0.0;
      for (double& p : row) {
        p = 0.05 + rng.uniform();  // bounded away from zero
        s += p;
      }
      for (double& p : row) p /= s;
    }
  model.prior.assign(vocab.size(), 0.0);
  double s = 0.0;
  for (double& p : model.prior) {
    p = 0.05 + rng.uniform();
    s += p;
  }
  for (double& p : model.prior) p /= s;
  return model;
}

TabularDenoiser exact_reverse_model(Vocabulary vocab, const NoiseSchedule& sched,
                                    const std::vector<double>& data_dist) {
  check_data_dist(vocab, data_dist);
  const int K = sched.steps();
  const int n = vocab.size();
  TabularDenoiser model;
  model.vocab = vocab;
  model.x0_given.assign(K, std::vector<std::vector<double>>(n, std::vector<double>(vocab.m, 0.0)));
  for (int k = 1; k <= K; ++k) {
    const CumulativeCoeffs c = cumulative_coeffs(vocab, sched, k);
    for (int xk = 0; xk < n; ++xk) {
      double norm = 0.0;
      auto& row = model.x0_given[k - 1][xk];
      for (int x0 = 0; x0 < vocab.m; ++x0) {
        row[x0] = data_dist[x0] * c.prob(vocab, x0, xk);
        norm += row[x0];
      }
      if (norm == 0.0) {
        // x_k unreachable under data_dist; any proper row works (never used)
        for (int x0 = 0; x0 < vocab.m; ++x0) row[x0] = 1.0 / vocab.m;
      } else {
        for (int x0 = 0; x0 < vocab.m; ++x0) row[x0] /= norm;
      }
    }
  }
  const CumulativeCoeffs cK = cumulative_coeffs(vocab, sched, K);
  model.prior.assign(n, 0.0);
  for (int xK = 0; xK < n; ++xK)
    for (int x0 = 0; x0 < vocab.m; ++x0)
      model.prior[xK] += data_dist[x0] * cK.prob(vocab, x0, xK);
  return model;
}

std::vector<double> reverse_step_distribution(const TabularDenoiser& model,
                                              const NoiseSchedule& sched, int k, int xk) {
  if (k < 1 || k > model.steps())
    throw std::invalid_argument("reverse_step_distribution: k outside [1, K]");
  const Vocabulary vocab = model.vocab;
  const int n = vocab.size();
  std::vector<double> dist(n, 0.0);
  const auto& head = model.x0_given[k - 1][xk];
  for (int x0t = 0; x0t < vocab.m; ++x0t) {
    const double w = head[x0t];
    if (w == 0.0) continue;
    const std::vector<double> post = posterior(vocab, sched, k, xk, x0t);  // throws if undefined
    for (int i = 0; i < n; ++i) dist[i] += w * post[i];
  }
  return dist;
}

double exact_log_likelihood(const TabularDenoiser& model, const NoiseSchedule& sched,
                            int x0) {
  model.validate();
  const Vocabulary vocab = model.vocab;
  if (!vocab.valid_token(x0) || vocab.is_mask(x0))
    throw std::invalid_argument("exact_log_likelihood: x0 must be a non-mask token");
  if (model.steps() != sched.steps())
    throw std::invalid_argument("exact_log_likelihood: model/schedule step mismatch");
  check_enumerable(vocab, sched.steps());

  const int n = vocab.size();
  const int K = sched.steps();
  // backward flow f_k(j) = sum over suffix paths; marginalizes the same sum
  // over all (m+1)^K latent paths without listing them
  std::vector<double> f = model.prior;
  for (int k = K; k >= 1; --k) {
    std::vector<double> g(n, 0.0);
    for (int j = 0; j < n; ++j) {
      if (f[j] == 0.0) continue;
      const std::vector<double> step = reverse_step_distribution(model, sched, k, j);
      for (int i = 0; i < n; ++i) g[i] += f[j] * step[i];
    }
    f.swap(g);
  }
  if (f[x0] <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(f[x0]);
}

double elbo_bound(const TabularDenoiser& model, const NoiseSchedule& sched,
                  const std::vector<double>& data_dist, int x0) {
  const Vocabulary vocab = model.vocab;
  check_data_dist(vocab, data_dist);
  if (!vocab.valid_token(x0) || vocab.is_mask(x0))
    throw std::invalid_argument("elbo_bound: x0 must be a non-mask token");
  if (model.steps() != sched.steps())
    throw std::invalid_argument("elbo_bound: model/schedule step mismatch");
  if (data_dist[x0] <= 0.0)
    throw std::domain_error("elbo_bound: x0 has zero probability under the data distribution");

  const int n = vocab.size();
  const int K = sched.steps();
  double recon = 0.0;     // sum_k E_{q(x_k|x0)}[ log p(x0 | x_k) ]
  double constant = std::log(data_dist[x0]);  // C(x0), starts from log q(x0)

  // prior-mismatch correction: E_{q(x_K|x0)}[ log p(x_K) - log q(x_K) ]
  {
    const CumulativeCoeffs cK = cumulative_coeffs(vocab, sched, K);
    std::vector<double> q_end(n, 0.0);
    for (int xK = 0; xK < n; ++xK)
      for (int t = 0; t < vocab.m; ++t) q_end[xK] += data_dist[t] * cK.prob(vocab, t, xK);
    for (int xK = 0; xK < n; ++xK) {
      const double w = cK.prob(vocab, x0, xK);
      if (w == 0.0) continue;
      constant += w * (std::log(model.prior[xK]) - std::log(q_end[xK]));
    }
  }

  for (int k = 1; k <= K; ++k) {
    const CumulativeCoeffs c = cumulative_coeffs(vocab, sched, k);
    // marginal q(x_k) under the data distribution, for q(x0 | x_k)
    std::vector<double> qxk(n, 0.0);
    for (int xk = 0; xk < n; ++xk)
      for (int t = 0; t < vocab.m; ++t) qxk[xk] += data_dist[t] * c.prob(vocab, t, xk);
    for (int xk = 0; xk < n; ++xk) {
      const double w = c.prob(vocab, x0, xk);  // q(x_k | x0)
      if (w == 0.0) continue;
      recon += w * std::log(model.x0_given[k - 1][xk][x0]);
      const double q_back = data_dist[x0] * w / qxk[xk];  // q(x0 | x_k)
      constant -= w * std::log(q_back);
    }
  }
  return recon + constant;
}

double expected_elbo_bound(const TabularDenoiser& model, const NoiseSchedule& sched,
                           const std::vector<double>& data_dist) {
  double e = 0.0;
  for (int x0 = 0; x0 < model.vocab.m; ++x0)
    if (data_dist[x0] > 0.0) e += data_dist[x0] * elbo_bound(model, sched, data_dist, x0);
  return e;
}

double expected_log_likelihood(const TabularDenoiser& model, const NoiseSchedule& sched,
                               const std::vector<double>& data_dist) {
  check_data_dist(model.vocab, data_dist);
  double e = 0.0;
  for (int x0 = 0; x0 < model.vocab.m; ++x0)
    if (data_dist[x0] > 0.0) e += data_dist[x0] * exact_log_likelihood(model, sched, x0);
  return e;
}

}  // namespace ddwm
