#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ddwm/corruption.hpp"
#include "ddwm/rng.hpp"

using namespace ddwm;

namespace {

TokenGrid checker_grid(Vocabulary v, int rows, int cols) {
  TokenGrid g(v, rows, cols, 0);
  for (int i = 0; i < g.size(); ++i) g.tokens[i] = i % v.m;
  return g;
}

Trajectory toy_trajectory(Vocabulary v, int frames, int rows = 4, int cols = 4) {
  Trajectory t;
  for (int f = 0; f < frames; ++f) {
    t.frames.push_back(checker_grid(v, rows, cols));
    t.actions.push_back(f == 0 ? zero_action() : translation_action(1, 0));
  }
  return t;
}

}  // namespace

TEST_CASE("no-op draws leave the grid untouched") {
  Vocabulary v(5);
  auto g = checker_grid(v, 6, 6);
  Rng rng(1);
  const auto s = corrupt_with(g, MaskSchedule{}, 0.2, /*u0=*/1.0, /*u1=*/0.0, rng);
  CHECK(s.corrupted.tokens == g.tokens);
  CHECK(s.masked_positions.empty());
  CHECK(s.noised_positions.empty());
}

TEST_CASE("u0 = 0 masks everything regardless of eta") {
  Vocabulary v(5);
  auto g = checker_grid(v, 5, 7);
  Rng rng(2);
  const auto s = corrupt_with(g, MaskSchedule{}, 0.2, 0.0, 0.9, rng);
  CHECK(s.corrupted.mask_count() == g.size());
  CHECK(static_cast<int>(s.masked_positions.size()) == g.size());
  CHECK(s.noised_positions.empty());
}

TEST_CASE("mask count is the exact ceiling") {
  Vocabulary v(4);
  auto g = checker_grid(v, 8, 8);  // N = 64
  Rng rng(3);
  // pick u0 so gamma(u0) = 0.3; ceil(0.3 * 64) = ceil(19.2) = 20
  const double u0 = 2.0 * std::acos(0.3) / M_PI;
  const auto s = corrupt_with(g, MaskSchedule{}, 0.0, u0, 0.0, rng);
  CHECK(static_cast<int>(s.masked_positions.size()) == 20);
  CHECK(s.corrupted.mask_count() == 20);
}

TEST_CASE("noise count uses banker's rounding") {
  Vocabulary v(4);
  auto g = checker_grid(v, 10, 10);  // N = 100, R = 100 with u0 = 1
  Rng rng(4);
  // u1 * eta * R = 2.5 -> rounds to 2
  auto s = corrupt_with(g, MaskSchedule{}, 0.05, 1.0, 0.5, rng);
  CHECK(static_cast<int>(s.noised_positions.size()) == 2);
  // u1 * eta * R = 3.5 -> rounds to 4
  s = corrupt_with(g, MaskSchedule{}, 0.07, 1.0, 0.5, rng);
  CHECK(static_cast<int>(s.noised_positions.size()) == 4);
}

TEST_CASE("masked and noised sets are disjoint and changes stay inside them") {
  Vocabulary v(6);
  auto g = checker_grid(v, 8, 8);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = corrupt(g, MaskSchedule{}, 0.3, rng);
    std::set<int> masked(s.masked_positions.begin(), s.masked_positions.end());
    std::set<int> noised(s.noised_positions.begin(), s.noised_positions.end());
    for (int p : noised) CHECK(masked.count(p) == 0);
    for (int i = 0; i < g.size(); ++i) {
      if (masked.count(i)) {
        CHECK(s.corrupted.tokens[i] == v.mask_index());
      } else if (!noised.count(i)) {
        CHECK(s.corrupted.tokens[i] == g.tokens[i]);
      } else {
        CHECK(s.corrupted.tokens[i] < v.mask_index());  // resample may equal original
      }
    }
  }
}

TEST_CASE("already-masked input is rejected") {
  Vocabulary v(3);
  TokenGrid g(v, 2, 2, v.mask_index());
  Rng rng(6);
  CHECK_THROWS_AS(corrupt(g, MaskSchedule{}, 0.2, rng), std::invalid_argument);
}

TEST_CASE("noised replacement values are uniform over the vocabulary") {
  Vocabulary v(8);
  auto g = checker_grid(v, 8, 8);
  Rng rng(7);
  std::vector<long> counts(v.m, 0);
  long total = 0;
  while (total < 100000) {
    // u0 = 1: nothing masked; u1 = 1 with eta = 1: everything noised
    const auto s = corrupt_with(g, MaskSchedule{}, 1.0, 1.0, 1.0, rng);
    for (int p : s.noised_positions) {
      ++counts[s.corrupted.tokens[p]];
      ++total;
    }
  }
  const double expected = static_cast<double>(total) / v.m;
  double chi2 = 0.0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // df = 7, p = 0.01 critical value
  CHECK(chi2 < 18.475);
}

TEST_CASE("objective mixture matches 50/40/10 within a percent") {
  Rng rng(8);
  const int n = 100000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_objective(rng))];
  CHECK(std::abs(counts[0] / double(n) - 0.5) <= 0.01);
  CHECK(std::abs(counts[1] / double(n) - 0.4) <= 0.01);
  CHECK(std::abs(counts[2] / double(n) - 0.1) <= 0.01);
}

TEST_CASE("temporal mask shapes") {
  const auto causal = build_temporal_mask(4, TemporalMaskMode::causal);
  CHECK(causal.frames == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(causal.allowed(i, j) == (j <= i));

  const auto ident = build_temporal_mask(3, TemporalMaskMode::identity);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(ident.allowed(i, j) == (i == j));

  const auto ext = build_temporal_mask(3, TemporalMaskMode::cfg_extended);
  CHECK(ext.frames == 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(ext.allowed(i, j) == (j <= i));
  for (int j = 0; j < 3; ++j) {
    CHECK(!ext.allowed(3, j));
    CHECK(!ext.allowed(j, 3));
  }
  CHECK(ext.allowed(3, 3));

  // single frame: causal and identity coincide
  const auto c1 = build_temporal_mask(1, TemporalMaskMode::causal);
  const auto i1 = build_temporal_mask(1, TemporalMaskMode::identity);
  CHECK(c1.allow == i1.allow);
}

TEST_CASE("future_only splits the trajectory") {
  Vocabulary v(4);
  const auto traj = toy_trajectory(v, 4);
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto app = apply_objective(traj, Objective::future_only, MaskSchedule{}, 0.2, rng);
    REQUIRE(app.split.has_value());
    const int split = *app.split;
    CHECK(split >= 1);
    CHECK(split <= 3);
    CHECK(app.mask_mode == TemporalMaskMode::causal);
    for (int f = 0; f < 4; ++f) {
      if (f < split) {
        CHECK(!app.in_loss[f]);
        CHECK(!app.corrupted_frame[f]);
        CHECK(app.samples[f].corrupted.tokens == traj.frames[f].tokens);
      } else {
        CHECK(app.in_loss[f]);
        CHECK(app.corrupted_frame[f]);
      }
      CHECK(!app.drop_action[f]);
    }
  }
}

TEST_CASE("joint and per-frame objectives corrupt every frame") {
  Vocabulary v(4);
  const auto traj = toy_trajectory(v, 3);
  Rng rng(10);

  const auto joint =
      apply_objective(traj, Objective::joint_past_future, MaskSchedule{}, 0.2, rng);
  CHECK(joint.mask_mode == TemporalMaskMode::causal);
  for (int f = 0; f < 3; ++f) {
    CHECK(joint.in_loss[f]);
    CHECK(joint.corrupted_frame[f]);
    CHECK(!joint.drop_action[f]);
  }

  const auto uncond =
      apply_objective(traj, Objective::per_frame_unconditional, MaskSchedule{}, 0.2, rng);
  CHECK(uncond.mask_mode == TemporalMaskMode::identity);
  for (int f = 0; f < 3; ++f) {
    CHECK(uncond.in_loss[f]);
    CHECK(uncond.drop_action[f]);
  }
}

TEST_CASE("future_only needs at least two frames") {
  Vocabulary v(4);
  const auto traj = toy_trajectory(v, 1);
  Rng rng(11);
  CHECK_THROWS_AS(apply_objective(traj, Objective::future_only, MaskSchedule{}, 0.2, rng),
                  std::invalid_argument);
  CHECK_NOTHROW(apply_objective(traj, Objective::joint_past_future, MaskSchedule{}, 0.2, rng));
  CHECK_NOTHROW(
      apply_objective(traj, Objective::per_frame_unconditional, MaskSchedule{}, 0.2, rng));
}

TEST_CASE("corruption is deterministic under a fixed seed") {
  Vocabulary v(5);
  const auto traj = toy_trajectory(v, 4);
  Rng a(123), b(123);
  const auto x = apply_objective(traj, Objective::joint_past_future, MaskSchedule{}, 0.2, a);
  const auto y = apply_objective(traj, Objective::joint_past_future, MaskSchedule{}, 0.2, b);
  for (int f = 0; f < 4; ++f) {
    CHECK(x.samples[f].corrupted.tokens == y.samples[f].corrupted.tokens);
    CHECK(x.samples[f].masked_positions == y.samples[f].masked_positions);
    CHECK(x.samples[f].noised_positions == y.samples[f].noised_positions);
  }
}
