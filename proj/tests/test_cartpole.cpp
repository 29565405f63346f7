#include <doctest.h>

#include <cmath>
#include <set>

#include "efe/cartpole.hpp"

using namespace efe;

TEST_SUITE_BEGIN("cartpole");

TEST_CASE("push right from rest matches the closed-form step") {
  // By hand: temp = 10/1.1, theta_acc = -temp/(0.5*(4/3 - (0.1/1.1))) =
  // -600/41, x_acc = temp + 0.05*(600/41)/1.1 = 400/41. One Euler step at
  // tau = 0.02 from rest leaves positions unchanged and sets the velocities.
  State4<double> s;
  State4<double> n = dynamics_step(s, Action::PushRight);
  CHECK(n.x == 0.0);
  CHECK(n.theta == 0.0);
  CHECK(n.x_dot == doctest::Approx(8.0 / 41.0).epsilon(1e-12));
  CHECK(n.theta_dot == doctest::Approx(-12.0 / 41.0).epsilon(1e-12));
  // Decimal forms quoted to eight places.
  CHECK(std::abs(n.x_dot - 0.19512195) < 1e-8);
  CHECK(std::abs(n.theta_dot - -0.29268293) < 1e-8);
}

TEST_CASE("push left mirrors push right exactly") {
  State4<double> s;
  State4<double> r = dynamics_step(s, Action::PushRight);
  State4<double> l = dynamics_step(s, Action::PushLeft);
  CHECK(l.x == -r.x);
  CHECK(l.x_dot == -r.x_dot);
  CHECK(l.theta == -r.theta);
  CHECK(l.theta_dot == -r.theta_dot);
}

TEST_CASE("dynamics are bit-deterministic") {
  State4<double> s{0.013, -0.42, 0.11, 0.7};
  State4<double> a = dynamics_step(s, Action::PushLeft);
  State4<double> b = dynamics_step(s, Action::PushLeft);
  CHECK(a.x == b.x);
  CHECK(a.x_dot == b.x_dot);
  CHECK(a.theta == b.theta);
  CHECK(a.theta_dot == b.theta_dot);
}

TEST_CASE("upright rest under balanced pushes stays near the fixed point") {
  // No-force is not expressible (actions always push), but the symmetric
  // derivative structure means theta stays 0 when theta and theta_dot are 0
  // for exactly one step.
  State4<double> s;
  State4<double> n = dynamics_step(s, Action::PushRight);
  CHECK(n.theta == 0.0);
  CHECK(n.x == 0.0);
}

TEST_CASE("reset is deterministic per seed and bounded") {
  CartPole<double> env;
  State4<double> a = env.reset(1234);
  State4<double> b = env.reset(1234);
  CHECK(a.x == b.x);
  CHECK(a.x_dot == b.x_dot);
  CHECK(a.theta == b.theta);
  CHECK(a.theta_dot == b.theta_dot);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    State4<double> s = env.reset(seed);
    CHECK(std::abs(s.x) <= 0.05);
    CHECK(std::abs(s.x_dot) <= 0.05);
    CHECK(std::abs(s.theta) <= 0.05);
    CHECK(std::abs(s.theta_dot) <= 0.05);
  }
}

TEST_CASE("distinct seeds give distinct states") {
  CartPole<double> env;
  int distinct = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    State4<double> a = env.reset(seed);
    State4<double> b = env.reset(seed + 1000);
    if (a.x != b.x || a.theta != b.theta) ++distinct;
  }
  CHECK(distinct == 1000);
}

TEST_CASE("episodes cap at 500 steps") {
  CartPole<double> env;
  // Alternating pushes keep the pole up long enough only rarely; force the
  // cap by checking that done is latched at or before 500 regardless.
  for (std::uint64_t seed : {7ull, 21ull, 99ull}) {
    env.reset(seed);
    int steps = 0;
    while (!env.done()) {
      // A crude balancing policy to reach the cap: push against the lean.
      Action a = env.state().theta > 0 ? Action::PushRight : Action::PushLeft;
      env.step(a);
      ++steps;
      REQUIRE(steps <= 500);
    }
    CHECK(steps <= 500);
    if (within_bounds(env.state())) CHECK(steps == 500);
  }
}

TEST_CASE("reward is one on every live step including the last") {
  CartPole<double> env;
  env.reset(3);
  while (!env.done()) {
    auto r = env.step(Action::PushRight);  // slams into the bound quickly
    CHECK(r.reward == 1.0);
  }
}

TEST_CASE("stepping a finished episode is rejected") {
  CartPole<double> env;
  env.reset(3);
  while (!env.done()) env.step(Action::PushRight);
  CHECK_THROWS_AS(env.step(Action::PushLeft), std::invalid_argument);
}

TEST_CASE("termination happens at the first bound violation") {
  CartPole<double> env;
  env.reset(42);
  int steps = 0;
  while (!env.done()) {
    env.step(Action::PushRight);
    ++steps;
    if (!env.done()) CHECK(within_bounds(env.state()));
  }
  CHECK(!within_bounds(env.state()));
  CHECK(steps < 500);
}

TEST_SUITE_END();
