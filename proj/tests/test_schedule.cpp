#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ddwm/schedule.hpp"
#include "ddwm/transition.hpp"

using namespace ddwm;

TEST_CASE("cosine mask fraction endpoints and midpoint") {
  CHECK(cosine_mask_fraction(0.0) == 1.0);
  CHECK(cosine_mask_fraction(1.0) == 0.0);
  CHECK(cosine_mask_fraction(0.5) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_mask_fraction(-0.01), std::invalid_argument);
  CHECK_THROWS_AS(cosine_mask_fraction(1.01), std::invalid_argument);

  // monotone non-increasing on a fine sweep
  double prev = 1.0;
  for (int i = 1; i <= 1000; ++i) {
    const double g = cosine_mask_fraction(i / 1000.0);
    CHECK(g <= prev + 1e-15);
    prev = g;
  }
}

TEST_CASE("MaskSchedule round trips through its id") {
  MaskSchedule s = MaskSchedule::from_id("cosine");
  CHECK(s.id() == "cosine");
  CHECK(s(0.25) == cosine_mask_fraction(0.25));
  CHECK_THROWS_AS(MaskSchedule::from_id("linear"), std::invalid_argument);
}

TEST_CASE("uniform schedule values and telescoping") {
  const auto beta = uniform_schedule(10, 0.2);
  CHECK(beta[0] == doctest::Approx(1.0 / 50.0).epsilon(1e-15));

  const auto one = uniform_schedule(1, 1.0);
  CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-15));

  for (int K : {1, 2, 5, 10, 37, 100}) {
    for (double eta : {0.05, 0.2, 0.5, 1.0}) {
      const auto b = uniform_schedule(K, eta);
      double surv = 1.0;
      for (int k = 1; k <= K; ++k) {
        surv *= 1.0 - b[k - 1];
        CHECK(std::abs((1.0 - surv) - eta * k / K) <= 1e-12);
      }
    }
  }

  CHECK_THROWS_AS(uniform_schedule(10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(uniform_schedule(10, 1.2), std::invalid_argument);
  CHECK_THROWS_AS(uniform_schedule(0, 0.2), std::invalid_argument);
}

TEST_CASE("absorbing schedule endpoints and range") {
  const auto a2 = absorbing_schedule(2);
  CHECK(a2[0] == doctest::Approx(1.0 - std::cos(M_PI / 4.0)).epsilon(1e-15));
  CHECK(a2[1] == 1.0);

  for (int K : {1, 2, 3, 10, 100, 1000}) {
    const auto a = absorbing_schedule(K);
    CHECK(a.back() == 1.0);
    double abar = 1.0;
    for (int k = 1; k <= K; ++k) {
      CHECK(a[k - 1] >= 0.0);
      CHECK(a[k - 1] <= 1.0);
      abar *= 1.0 - a[k - 1];
      const double want = (k == K) ? 0.0 : std::cos(static_cast<double>(k) / K * M_PI / 2.0);
      CHECK(std::abs(abar - want) <= 1e-12);
    }
  }
}

TEST_CASE("cosine-absorbing and linear-uniform rates are compatible before the terminal step") {
  // alpha_K = 1 by construction, so the combination can only be carried
  // through step K-1; below that the guard alpha+beta <= 1 holds for eta <= 0.5.
  for (int K : {2, 3, 5, 10, 50}) {
    const auto alpha = absorbing_schedule(K);
    for (double eta : {0.1, 0.2, 0.5}) {
      const auto beta = uniform_schedule(K, eta);
      for (int k = 1; k < K; ++k) CHECK(alpha[k - 1] + beta[k - 1] <= 1.0);
      if (K >= 2) {
        std::vector<double> a(alpha.begin(), alpha.end() - 1);
        std::vector<double> b(beta.begin(), beta.end() - 1);
        CHECK_NOTHROW(NoiseSchedule(a, b));
      }
    }
  }
}
