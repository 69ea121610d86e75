#include "ddwm/transition.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddwm {

namespace {

void check_rate(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1], got " +
                                std::to_string(x));
}

void check_dense_cap(const Vocabulary& vocab) {
  if (vocab.m > kDenseVocabCap)
    throw std::invalid_argument(
        "dense transition matrices are capped at m = " + std::to_string(kDenseVocabCap) +
        " (got m = " + std::to_string(vocab.m) + "); use the coefficient form");
}

}  // namespace

TransitionMatrix::TransitionMatrix(Vocabulary v) : vocab(v) {
  check_dense_cap(vocab);
  p.assign(static_cast<size_t>(n()) * n(), 0.0);
}

void TransitionMatrix::validate() const {
  const int nn = n();
  for (int i = 0; i < nn; ++i) {
    double row = 0.0;
    for (int j = 0; j < nn; ++j) {
      const double e = at(i, j);
      if (!(e >= 0.0 && e <= 1.0))
        throw std::domain_error("TransitionMatrix: entry (" + std::to_string(i) + "," +
                                std::to_string(j) + ") = " + std::to_string(e) +
                                " outside [0, 1]");
      row += e;
    }
    if (std::abs(row - 1.0) > 1e-12)
      throw std::domain_error("TransitionMatrix: row " + std::to_string(i) +
                              " sums to " + std::to_string(row));
  }
  const int mi = vocab.mask_index();
  for (int j = 0; j < nn; ++j) {
    const double want = (j == mi) ? 1.0 : 0.0;
    if (at(mi, j) != want)
      throw std::domain_error("TransitionMatrix: mask row is not absorbing");
  }
}

TransitionMatrix matmul(const TransitionMatrix& a, const TransitionMatrix& b) {
  if (a.vocab.m != b.vocab.m)
    throw std::invalid_argument("matmul: vocabulary mismatch");
  const int n = a.n();
  TransitionMatrix c(a.vocab);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < n; ++j) c.at(i, j) += aik * b.at(k, j);
    }
  return c;
}

double max_abs_diff(const TransitionMatrix& a, const TransitionMatrix& b) {
  if (a.vocab.m != b.vocab.m || a.p.size() != b.p.size())
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double d = 0.0;
  for (size_t i = 0; i < a.p.size(); ++i) d = std::max(d, std::abs(a.p[i] - b.p[i]));
  return d;
}

TransitionMatrix absorbing_step(Vocabulary vocab, double alpha) {
  check_rate(alpha, "alpha");
  TransitionMatrix q(vocab);
  const int mi = vocab.mask_index();
  for (int i = 0; i < mi; ++i) {
    q.at(i, i) = 1.0 - alpha;
    q.at(i, mi) = alpha;
  }
  q.at(mi, mi) = 1.0;
  return q;
}

TransitionMatrix uniform_step(Vocabulary vocab, double beta) {
  check_rate(beta, "beta");
  TransitionMatrix q(vocab);
  const int mi = vocab.mask_index();
  const double nu = beta / vocab.m;
  for (int i = 0; i < mi; ++i) {
    for (int j = 0; j < mi; ++j) q.at(i, j) = nu + (i == j ? 1.0 - beta : 0.0);
  }
  q.at(mi, mi) = 1.0;
  return q;
}

TransitionMatrix combined_step(Vocabulary vocab, double alpha, double beta) {
  check_rate(alpha, "alpha");
  check_rate(beta, "beta");
  if (alpha + beta > 1.0)
    throw std::invalid_argument("combined_step: alpha + beta = " +
                                std::to_string(alpha + beta) + " exceeds 1");
  TransitionMatrix q(vocab);
  const int mi = vocab.mask_index();
  const double nu = beta / vocab.m;
  const double omega = 1.0 - beta - alpha;
  for (int i = 0; i < mi; ++i) {
    for (int j = 0; j < mi; ++j) q.at(i, j) = nu + (i == j ? omega : 0.0);
    q.at(i, mi) = alpha;
  }
  q.at(mi, mi) = 1.0;
  return q;
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_, std::vector<double> beta_)
    : alpha(std::move(alpha_)), beta(std::move(beta_)) {
  if (alpha.size() != beta.size())
    throw std::invalid_argument("NoiseSchedule: alpha/beta length mismatch");
  if (alpha.empty()) throw std::invalid_argument("NoiseSchedule: needs at least one step");
  for (size_t k = 0; k < alpha.size(); ++k) {
    check_rate(alpha[k], "alpha");
    check_rate(beta[k], "beta");
    if (alpha[k] + beta[k] > 1.0)
      throw std::invalid_argument("NoiseSchedule: alpha_k + beta_k = " +
                                  std::to_string(alpha[k] + beta[k]) + " > 1 at step " +
                                  std::to_string(k + 1) + " (error, not clamped)");
  }
}

double CumulativeCoeffs::prob(const Vocabulary& vocab, int x0, int xk) const {
  if (!vocab.valid_token(x0) || !vocab.valid_token(xk))
    throw std::invalid_argument("CumulativeCoeffs::prob: token outside vocabulary");
  const int mi = vocab.mask_index();
  if (x0 == mi) return xk == mi ? 1.0 : 0.0;  // mask is absorbing
  if (xk == mi) return chi_bar;
  return nu_bar + (x0 == xk ? omega_bar : 0.0);
}

CumulativeCoeffs cumulative_coeffs(Vocabulary vocab, const NoiseSchedule& sched, int k) {
  if (k < 0 || k > sched.steps())
    throw std::invalid_argument("cumulative_coeffs: k = " + std::to_string(k) +
                                " outside [0, K = " + std::to_string(sched.steps()) + "]");
  CumulativeCoeffs c;
  double keep = 1.0;  // prod (1 - alpha_s)
  for (int s = 0; s < k; ++s) {
    c.omega_bar *= 1.0 - sched.beta[s] - sched.alpha[s];
    keep *= 1.0 - sched.alpha[s];
  }
  c.chi_bar = 1.0 - keep;
  c.nu_bar = (1.0 - c.omega_bar - c.chi_bar) / vocab.m;
  return c;
}

double step_prob(Vocabulary vocab, double alpha, double beta, int i, int j) {
  check_rate(alpha, "alpha");
  check_rate(beta, "beta");
  if (!vocab.valid_token(i) || !vocab.valid_token(j))
    throw std::invalid_argument("step_prob: token outside vocabulary");
  const int mi = vocab.mask_index();
  if (i == mi) return j == mi ? 1.0 : 0.0;
  if (j == mi) return alpha;
  return beta / vocab.m + (i == j ? 1.0 - beta - alpha : 0.0);
}

TransitionMatrix cumulative(Vocabulary vocab, const NoiseSchedule& sched, int k) {
  check_dense_cap(vocab);
  const CumulativeCoeffs c = cumulative_coeffs(vocab, sched, k);
  TransitionMatrix q(vocab);
  const int mi = vocab.mask_index();
  for (int i = 0; i < mi; ++i) {
    for (int j = 0; j < mi; ++j) q.at(i, j) = c.nu_bar + (i == j ? c.omega_bar : 0.0);
    q.at(i, mi) = c.chi_bar;
  }
  q.at(mi, mi) = 1.0;
  return q;
}

std::vector<double> posterior(Vocabulary vocab, const NoiseSchedule& sched,
                              int k, int xk, int x0) {
  if (k < 1 || k > sched.steps())
    throw std::invalid_argument("posterior: step k = " + std::to_string(k) +
                                " outside [1, K]");
  if (!vocab.valid_token(xk) || !vocab.valid_token(x0))
    throw std::invalid_argument("posterior: token outside vocabulary");

  const CumulativeCoeffs prev = cumulative_coeffs(vocab, sched, k - 1);
  const CumulativeCoeffs cur = cumulative_coeffs(vocab, sched, k);

  const double denom = cur.prob(vocab, x0, xk);
  if (denom == 0.0)
    throw std::domain_error("posterior: undefined, q(x_k | x_0) = 0 for (x_0 = " +
                            std::to_string(x0) + ", x_k = " + std::to_string(xk) + ")");

  const double a = sched.alpha[k - 1];
  const double b = sched.beta[k - 1];
  const int n = vocab.size();
  std::vector<double> post(n, 0.0);
  for (int i = 0; i < n; ++i)
    post[i] = prev.prob(vocab, x0, i) * step_prob(vocab, a, b, i, xk) / denom;
  return post;
}

}  // namespace ddwm
