#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ddwm/likelihood.hpp"
#include "ddwm/rng.hpp"

using namespace ddwm;

namespace {

NoiseSchedule random_interior_schedule(Rng& rng, int steps) {
  std::vector<double> a(steps), b(steps);
  for (int k = 0; k < steps; ++k) {
    const double total = 0.1 + 0.7 * rng.uniform();
    const double split = 0.2 + 0.6 * rng.uniform();
    a[k] = total * split;
    b[k] = total * (1.0 - split);
  }
  return NoiseSchedule(a, b);
}

std::vector<double> random_data_dist(Rng& rng, int m) {
  std::vector<double> d(m);
  double s = 0.0;
  for (double& p : d) {
    p = 0.1 + rng.uniform();
    s += p;
  }
  for (double& p : d) p /= s;
  return d;
}

// literal path sum over all (m+1)^K latent chains; independent of the DP
double path_enumeration_log_likelihood(const TabularDenoiser& model,
                                       const NoiseSchedule& sched, int x0) {
  const int n = model.vocab.size();
  const int K = sched.steps();
  // cache reverse kernels p(x_{k-1}=i | x_k=j)
  std::vector<std::vector<std::vector<double>>> rev(K + 1);
  for (int k = 1; k <= K; ++k) {
    rev[k].resize(n);
    for (int j = 0; j < n; ++j) rev[k][j] = reverse_step_distribution(model, sched, k, j);
  }
  double total = 0.0;
  std::vector<int> path(K, 0);  // path[k-1] = x_k
  while (true) {
    double p = model.prior[path[K - 1]];
    for (int k = K; k >= 2; --k) p *= rev[k][path[k - 1]][path[k - 2]];
    p *= rev[1][path[0]][x0];
    total += p;
    int pos = 0;
    while (pos < K && ++path[pos] == n) path[pos++] = 0;
    if (pos == K) break;
  }
  return std::log(total);
}

}  // namespace

TEST_CASE("exact reverse model reproduces the data marginal") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Vocabulary v(1 + static_cast<int>(rng.uniform_int(0, 3)));
    const int K = 1 + static_cast<int>(rng.uniform_int(0, 2));
    NoiseSchedule sched = random_interior_schedule(rng, K);
    const auto data = random_data_dist(rng, v.m);
    const auto model = exact_reverse_model(v, sched, data);
    for (int x0 = 0; x0 < v.m; ++x0) {
      const double lp = exact_log_likelihood(model, sched, x0);
      CHECK(lp == doctest::Approx(std::log(data[x0])).epsilon(1e-10));
    }
  }
}

TEST_CASE("single-symbol vocabulary has log-likelihood zero") {
  Rng rng(6);
  Vocabulary v(1);
  NoiseSchedule sched = random_interior_schedule(rng, 3);
  const auto model = random_tabular_denoiser(v, 3, rng);
  CHECK(std::abs(exact_log_likelihood(model, sched, 0)) <= 1e-12);
}

TEST_CASE("reverse-chain likelihood normalizes over x0") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Vocabulary v(1 + static_cast<int>(rng.uniform_int(0, 3)));
    const int K = 1 + static_cast<int>(rng.uniform_int(0, 2));
    NoiseSchedule sched = random_interior_schedule(rng, K);
    const auto model = random_tabular_denoiser(v, K, rng);
    double total = 0.0;
    for (int x0 = 0; x0 < v.m; ++x0) total += std::exp(exact_log_likelihood(model, sched, x0));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("dynamic-programming likelihood equals literal path enumeration") {
  Rng rng(8);
  Vocabulary v(3);
  NoiseSchedule sched = random_interior_schedule(rng, 3);
  const auto model = random_tabular_denoiser(v, 3, rng);
  for (int x0 = 0; x0 < v.m; ++x0) {
    const double dp = exact_log_likelihood(model, sched, x0);
    const double brute = path_enumeration_log_likelihood(model, sched, x0);
    CHECK(dp == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("enumeration refuses oversized state spaces") {
  Rng rng(9);
  Vocabulary v(40);
  NoiseSchedule sched = random_interior_schedule(rng, 4);
  const auto model = random_tabular_denoiser(v, 4, rng);
  CHECK_THROWS_WITH_AS(exact_log_likelihood(model, sched, 0),
                       doctest::Contains("exceeds bound"), std::runtime_error);
}

TEST_CASE("lower bound holds in expectation for random tabular models") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    Vocabulary v(1 + static_cast<int>(rng.uniform_int(0, 2)));
    const int K = 1 + static_cast<int>(rng.uniform_int(0, 2));
    NoiseSchedule sched = random_interior_schedule(rng, K);
    const auto data = random_data_dist(rng, v.m);
    const auto model = random_tabular_denoiser(v, K, rng);
    const double bound = expected_elbo_bound(model, sched, data);
    const double exact = expected_log_likelihood(model, sched, data);
    CHECK(exact - bound >= -1e-10);
  }
}

TEST_CASE("K=1 pure masking on uniform data reduces to masked cross-entropy") {
  Rng rng(11);
  Vocabulary v(4);
  const double a = 0.37;
  NoiseSchedule sched({a}, {0.0});
  std::vector<double> data(v.m, 1.0 / v.m);
  auto model = random_tabular_denoiser(v, 1, rng);
  // matched prior p(x_1) = q(x_1) so the closed form has no prior correction
  for (int t = 0; t < v.m; ++t) model.prior[t] = (1.0 - a) / v.m;
  model.prior[v.mask_index()] = a;
  for (int x0 = 0; x0 < v.m; ++x0) {
    const double bound = elbo_bound(model, sched, data, x0);
    // hand-derived closed form: masked CE at the mask state plus the
    // survived-token self term and its backward-entropy constant
    const double want = a * std::log(model.x0_given[0][v.mask_index()][x0]) +
                        (1.0 - a) * std::log(model.x0_given[0][x0][x0]) +
                        (1.0 - a) * std::log(1.0 / v.m);
    CHECK(bound == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("perfect denoiser on deterministic data closes the bound gap") {
  Rng rng(12);
  Vocabulary v(3);
  NoiseSchedule sched = random_interior_schedule(rng, 3);
  std::vector<double> data = {0.0, 1.0, 0.0};  // always token 1
  const auto model = exact_reverse_model(v, sched, data);
  const double exact = exact_log_likelihood(model, sched, 1);
  const double bound = elbo_bound(model, sched, data, 1);
  CHECK(std::abs(exact) <= 1e-12);
  CHECK(std::abs(bound) <= 1e-12);
}

TEST_CASE("elbo_bound rejects impossible x0") {
  Rng rng(13);
  Vocabulary v(3);
  NoiseSchedule sched = random_interior_schedule(rng, 2);
  const auto model = random_tabular_denoiser(v, 2, rng);
  std::vector<double> data = {0.0, 1.0, 0.0};
  CHECK_THROWS_AS(elbo_bound(model, sched, data, 0), std::domain_error);
  CHECK_THROWS_AS(elbo_bound(model, sched, data, v.mask_index()), std::invalid_argument);
}
