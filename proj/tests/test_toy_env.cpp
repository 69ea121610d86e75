#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ddwm/toy_env.hpp"

using namespace ddwm;

namespace {

ToyDynamicsConfig small_cfg() {
  ToyDynamicsConfig cfg;
  cfg.rows = 8;
  cfg.cols = 8;
  cfg.vocab_m = 8;
  cfg.frames = 6;
  return cfg;
}

int count_color(const TokenGrid& g, int32_t color) {
  int n = 0;
  for (int32_t t : g.tokens) n += (t == color);
  return n;
}

}  // namespace

TEST_SUITE("render_state") {
  TEST_CASE("paints the block over background zero") {
    ToyDynamicsConfig cfg = small_cfg();
    ToyState s;
    s.r = 2;
    s.c = 3;
    s.side = 2;
    s.color = 5;
    TokenGrid g = render_state(cfg, s);
    CHECK(g.rows == 8);
    CHECK(g.cols == 8);
    CHECK(count_color(g, 5) == 4);
    CHECK(count_color(g, 0) == 60);
    CHECK(g.at(2, 3) == 5);
    CHECK(g.at(3, 4) == 5);
    CHECK(g.at(1, 3) == 0);
    CHECK(g.at(2, 2) == 0);
  }
}

TEST_SUITE("step_state") {
  TEST_CASE("zero velocity leaves the state unchanged") {
    ToyDynamicsConfig cfg = small_cfg();
    ToyState s;
    s.r = 4;
    s.c = 1;
    s.side = 2;
    s.color = 3;
    ToyState n = step_state(cfg, s, zero_action());
    CHECK(n.r == s.r);
    CHECK(n.c == s.c);
    CHECK(n.side == s.side);
    CHECK(n.color == s.color);
  }

  TEST_CASE("velocity (1, 0) shifts one column per frame") {
    ToyDynamicsConfig cfg = small_cfg();
    ToyState s;
    s.r = 3;
    s.c = 2;
    s.side = 2;
    s.color = 4;
    const Action a = translation_action(1.0, 0.0);
    ToyState n = step_state(cfg, s, a);
    CHECK(n.r == 3);
    CHECK(n.c == 3);
    TokenGrid before = render_state(cfg, s);
    TokenGrid after = render_state(cfg, n);
    for (int r = 0; r < 8; ++r)
      for (int c = 1; c < 8; ++c) CHECK(after.at(r, c) == before.at(r, c - 1));
  }

  TEST_CASE("outward velocity at the wall reflects back inside") {
    ToyDynamicsConfig cfg = small_cfg();
    ToyState s;
    s.r = 0;
    s.c = 6;  // right wall for a 2-wide block
    s.side = 2;
    s.color = 2;
    // +2 columns would overshoot by 2; reflection folds it back to column 4
    ToyState n = step_state(cfg, s, translation_action(2.0, 0.0));
    CHECK(n.c == 4);
    // -1 row from the top folds to row 1
    n = step_state(cfg, s, translation_action(0.0, -1.0));
    CHECK(n.r == 1);
  }

  TEST_CASE("block always stays inside the grid") {
    ToyDynamicsConfig cfg = small_cfg();
    Rng rng(11);
    ToyState s;
    s.r = 5;
    s.c = 0;
    s.side = 2;
    s.color = 1;
    for (int t = 0; t < 500; ++t) {
      const double dx = static_cast<double>(rng.uniform_int(-3, 3));
      const double dy = static_cast<double>(rng.uniform_int(-3, 3));
      s = step_state(cfg, s, translation_action(dx, dy));
      CHECK(s.r >= 0);
      CHECK(s.r <= cfg.rows - s.side);
      CHECK(s.c >= 0);
      CHECK(s.c <= cfg.cols - s.side);
    }
  }
}

TEST_SUITE("generate_episode") {
  TEST_CASE("shapes, conventions and token ranges") {
    ToyDynamicsConfig cfg = small_cfg();
    Rng rng(7);
    Trajectory traj = generate_episode(cfg, rng);
    traj.validate();
    REQUIRE(traj.frames.size() == 6);
    REQUIRE(traj.actions.size() == 6);
    CHECK(traj.actions[0] == zero_action());
    for (const TokenGrid& f : traj.frames) {
      CHECK(f.fully_decoded());
      // block color never uses the background id or the mask id
      for (int32_t t : f.tokens) {
        CHECK(t >= 0);
        CHECK(t < cfg.vocab_m);
      }
    }
    // same block count in every frame (rigid object)
    const int n0 = 64 - count_color(traj.frames[0], 0);
    for (const TokenGrid& f : traj.frames) CHECK(64 - count_color(f, 0) == n0);
  }

  TEST_CASE("frames follow the recorded actions") {
    ToyDynamicsConfig cfg = small_cfg();
    Rng rng(3);
    Trajectory traj = generate_episode(cfg, rng);
    std::vector<Action> future(traj.actions.begin() + 1, traj.actions.end());
    std::vector<TokenGrid> sim = simulate_continuation(cfg, traj.frames[0], future);
    REQUIRE(sim.size() == traj.frames.size() - 1);
    for (size_t f = 0; f < sim.size(); ++f)
      CHECK(sim[f].tokens == traj.frames[f + 1].tokens);
  }

  TEST_CASE("deterministic given the seed") {
    ToyDynamicsConfig cfg = small_cfg();
    Rng a(42), b(42);
    Trajectory ta = generate_episode(cfg, a);
    Trajectory tb = generate_episode(cfg, b);
    for (size_t f = 0; f < ta.frames.size(); ++f)
      CHECK(ta.frames[f].tokens == tb.frames[f].tokens);
  }

  TEST_CASE("config validation rejects oversized blocks") {
    ToyDynamicsConfig cfg = small_cfg();
    cfg.block_max = 9;
    Rng rng(0);
    CHECK_THROWS_AS(generate_episode(cfg, rng), std::invalid_argument);
  }
}

TEST_SUITE("token_error") {
  TEST_CASE("counts mismatched cells") {
    ToyDynamicsConfig cfg = small_cfg();
    ToyState s;
    s.r = 0;
    s.c = 0;
    s.side = 2;
    s.color = 3;
    TokenGrid a = render_state(cfg, s);
    TokenGrid b = a;
    CHECK(token_error({a}, {b}) == 0.0);
    b.at(0, 0) = 0;
    b.at(5, 5) = 7;
    CHECK(token_error({a}, {b}) == doctest::Approx(2.0 / 64.0));
    // averaged over frames
    CHECK(token_error({a, a}, {a, b}) == doctest::Approx(1.0 / 64.0));
    CHECK_THROWS_AS(token_error({a}, {a, b}), std::invalid_argument);
  }
}
