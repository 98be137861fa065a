#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "steer/dataset.hpp"
#include "steer/envs.hpp"

using steer::ChainMdp;
using steer::Dataset;
using steer::GoalBandit;
using steer::PointMassEnv;
using steer::Rng;
using steer::StepResult;

TEST_CASE("zero action leaves the point mass in place") {
  PointMassEnv env;
  std::vector<double> start{0.3, -0.2}, s(2);
  env.reset_to(start);
  StepResult res = env.step(std::vector<double>{0.0, 0.0}, s);
  CHECK(s[0] == 0.3);
  CHECK(s[1] == -0.2);
  CHECK_FALSE(res.done);
  CHECK(res.reward == 0.0);
}

TEST_CASE("max straight-line actions reach the rewarded goal in four steps") {
  PointMassEnv env;
  env.reset_to(std::vector<double>{0.0, 0.0});
  std::vector<double> s(2);
  const std::vector<double> right{PointMassEnv::kActionBound, 0.0};
  for (int i = 0; i < 3; ++i) {
    StepResult res = env.step(right, s);
    CHECK_FALSE(res.done);
  }
  StepResult res = env.step(right, s);
  CHECK(res.done);
  CHECK(res.reward == 1.0);
  CHECK(s[0] == doctest::Approx(0.8));
}

TEST_CASE("horizon exhaustion ends the episode without reward") {
  PointMassEnv env;
  env.reset_to(std::vector<double>{0.0, 0.0});
  std::vector<double> s(2);
  const std::vector<double> still{0.0, 0.0};
  StepResult res;
  for (std::size_t i = 0; i < PointMassEnv::kHorizon; ++i) {
    res = env.step(still, s);
    CHECK(res.done == (i + 1 == PointMassEnv::kHorizon));
  }
  CHECK(res.reward == 0.0);
  CHECK_THROWS_AS(env.step(still, s), std::logic_error);
}

TEST_CASE("positions and actions are clamped to their boxes") {
  PointMassEnv env;
  env.reset_to(std::vector<double>{0.95, -0.95});
  std::vector<double> s(2);
  // Oversized action: clamped to the 0.2 bound, then position to the box.
  env.step(std::vector<double>{5.0, -5.0}, s);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == -1.0);
}

TEST_CASE("entering the decoy goal ends the episode with zero reward") {
  PointMassEnv env;
  env.reset_to(std::vector<double>{-0.65, 0.0});
  std::vector<double> s(2);
  StepResult res = env.step(std::vector<double>{-0.2, 0.0}, s);
  CHECK(res.done);
  CHECK(res.reward == 0.0);
  CHECK(PointMassEnv::in_left_goal(s));
}

TEST_CASE("identical seeds give identical trajectories") {
  PointMassEnv e1, e2;
  Rng r1(33), r2(33);
  std::vector<double> s1(2), s2(2), n1(2), n2(2);
  for (int ep = 0; ep < 5; ++ep) {
    e1.reset(r1, s1);
    e2.reset(r2, s2);
    CHECK(s1[0] == s2[0]);
    CHECK(s1[1] == s2[1]);
    Rng act(100 + ep);
    while (true) {
      std::vector<double> a{act.uniform(-0.2, 0.2), act.uniform(-0.2, 0.2)};
      StepResult q1 = e1.step(a, n1);
      StepResult q2 = e2.step(a, n2);
      CHECK(n1[0] == n2[0]);
      CHECK(n1[1] == n2[1]);
      CHECK(q1.done == q2.done);
      CHECK(q1.reward == q2.reward);
      if (q1.done) break;
    }
  }
}

TEST_CASE("demonstrations split between goals by the requested mix") {
  PointMassEnv env;
  Rng rng(34);

  Dataset all_right = steer::generate_demos(env, 1.0, 50, rng);
  std::size_t episodes = 0, rewarded = 0;
  for (std::size_t i = 0; i < all_right.size(); ++i)
    if (all_right.dones[i] == 1.0) {
      ++episodes;
      if (all_right.rewards[i] == 1.0) ++rewarded;
    }
  CHECK(episodes == 50);
  CHECK(rewarded == 50);

  Dataset all_left = steer::generate_demos(env, 0.0, 50, rng);
  for (std::size_t i = 0; i < all_left.size(); ++i)
    if (all_left.dones[i] == 1.0) {
      CHECK(all_left.rewards[i] == 0.0);
      CHECK(PointMassEnv::in_left_goal({all_left.next_state(i), 2}));
    }

  Dataset mixed = steer::generate_demos(env, 0.5, 200, rng);
  episodes = 0;
  rewarded = 0;
  for (std::size_t i = 0; i < mixed.size(); ++i)
    if (mixed.dones[i] == 1.0) {
      ++episodes;
      if (mixed.rewards[i] == 1.0) ++rewarded;
    }
  CHECK(episodes == 200);
  const double frac = static_cast<double>(rewarded) / 200.0;
  CHECK(frac > 0.43);
  CHECK(frac < 0.57);

  CHECK_THROWS_AS(steer::generate_demos(env, 0.5, 0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(steer::generate_demos(env, 1.5, 10, rng),
                  std::invalid_argument);
}

TEST_CASE("demo actions are noisy but bounded") {
  PointMassEnv env;
  Rng rng(35);
  Dataset d = steer::generate_demos(env, 1.0, 20, rng);
  bool any_off_axis = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(std::fabs(d.actions[2 * i]) <= PointMassEnv::kActionBound);
    CHECK(std::fabs(d.actions[2 * i + 1]) <= PointMassEnv::kActionBound);
    if (std::fabs(d.actions[2 * i + 1]) > 1e-6) any_off_axis = true;
  }
  CHECK(any_off_axis);
}

TEST_CASE("dataset round trip is bit-exact") {
  PointMassEnv env;
  Rng rng(36);
  Dataset d = steer::generate_demos(env, 0.5, 30, rng);
  steer::dataset_save(d, "demo_roundtrip.bin");
  Dataset back = steer::dataset_load("demo_roundtrip.bin");
  std::remove("demo_roundtrip.bin");

  CHECK(back.state_dim == d.state_dim);
  CHECK(back.action_dim == d.action_dim);
  CHECK(back.gamma == d.gamma);
  CHECK(back.env_id == d.env_id);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.states.size(); ++i)
    CHECK(back.states[i] == d.states[i]);
  for (std::size_t i = 0; i < d.actions.size(); ++i)
    CHECK(back.actions[i] == d.actions[i]);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.rewards[i] == d.rewards[i]);
    CHECK(back.dones[i] == d.dones[i]);
  }
  for (std::size_t i = 0; i < d.next_states.size(); ++i)
    CHECK(back.next_states[i] == d.next_states[i]);
}

TEST_CASE("corrupt dataset files are rejected with clear errors") {
  PointMassEnv env;
  Rng rng(37);
  Dataset d = steer::generate_demos(env, 1.0, 3, rng);
  const char* path = "demo_corrupt.bin";
  steer::dataset_save(d, path);

  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.put('X');  // clobber the magic
  }
  CHECK_THROWS_AS((void)steer::dataset_load(path), std::runtime_error);

  steer::dataset_save(d, path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    f.put(static_cast<char>(9));  // bogus version
  }
  CHECK_THROWS_AS((void)steer::dataset_load(path), std::runtime_error);

  steer::dataset_save(d, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size() - 5));
  }
  CHECK_THROWS_AS((void)steer::dataset_load(path), std::runtime_error);
  std::remove(path);
  CHECK_THROWS_AS((void)steer::dataset_load("no_such_dataset.bin"),
                  std::runtime_error);
}

TEST_CASE("a hundred thousand transitions load in under a second") {
  Dataset d;
  d.state_dim = 2;
  d.action_dim = 2;
  d.env_id = "pointmass";
  Rng rng(38);
  std::vector<double> s(2), a(2), s2(2);
  for (int i = 0; i < 100000; ++i) {
    s[0] = rng.normal();
    s[1] = rng.normal();
    a[0] = rng.uniform(-0.2, 0.2);
    a[1] = rng.uniform(-0.2, 0.2);
    s2[0] = rng.normal();
    s2[1] = rng.normal();
    d.push(s, a, i % 97 == 0 ? 1.0 : 0.0, s2, i % 31 == 0);
  }
  const char* path = "demo_large.bin";
  steer::dataset_save(d, path);
  const auto t0 = std::chrono::steady_clock::now();
  Dataset back = steer::dataset_load(path);
  const auto t1 = std::chrono::steady_clock::now();
  std::remove(path);
  CHECK(back.size() == 100000);
  CHECK(std::chrono::duration<double>(t1 - t0).count() < 1.0);
}

TEST_CASE("chain effects follow the thirds thresholds") {
  CHECK(ChainMdp::effect_of(-0.9) == -1);
  CHECK(ChainMdp::effect_of(-1.0 / 3.0) == 0);
  CHECK(ChainMdp::effect_of(0.0) == 0);
  CHECK(ChainMdp::effect_of(1.0 / 3.0) == 0);
  CHECK(ChainMdp::effect_of(0.34) == 1);
  CHECK(ChainMdp::effect_of(2.0) == 1);
}

TEST_CASE("chain dynamics are enumerable and only the right end pays") {
  ChainMdp env(8);
  CHECK(env.n_states() == 9);
  CHECK(env.start_state() == 4);

  auto o = env.lookup(4, 1);
  CHECK(o.next == 5);
  CHECK(o.reward == 0.0);
  CHECK_FALSE(o.terminal);
  o = env.lookup(7, 1);
  CHECK(o.next == 8);
  CHECK(o.reward == 1.0);
  CHECK(o.terminal);
  o = env.lookup(1, -1);
  CHECK(o.next == 0);
  CHECK(o.reward == 0.0);
  CHECK(o.terminal);
  o = env.lookup(4, 0);
  CHECK(o.next == 4);
  CHECK_FALSE(o.terminal);

  // Walking right from the start pays off in exactly n - start steps.
  Rng rng(39);
  std::vector<double> s(9);
  env.reset(rng, s);
  CHECK(s[4] == 1.0);
  StepResult res;
  int steps = 0;
  do {
    res = env.step(std::vector<double>{1.0}, s);
    ++steps;
  } while (!res.done);
  CHECK(steps == 4);
  CHECK(res.reward == 1.0);
  CHECK(s[8] == 1.0);
}

TEST_CASE("chain episodes truncate at the horizon when stalling") {
  ChainMdp env(4);
  Rng rng(40);
  std::vector<double> s(5);
  env.reset(rng, s);
  StepResult res;
  std::size_t steps = 0;
  do {
    res = env.step(std::vector<double>{0.0}, s);
    ++steps;
  } while (!res.done);
  CHECK(steps == env.horizon());
  CHECK(res.reward == 0.0);
}

TEST_CASE("bandit reward is the negative squared distance to the target") {
  GoalBandit env;
  Rng rng(41);
  std::vector<double> s(1), s2(1);
  env.reset(rng, s);
  CHECK(s[0] == 0.0);
  StepResult res = env.step(std::vector<double>{0.5, -0.3}, s2);
  CHECK(res.reward == 0.0);
  CHECK(res.done);
  CHECK_THROWS_AS(env.step(std::vector<double>{0.0, 0.0}, s2),
                  std::logic_error);

  env.reset(rng, s);
  res = env.step(std::vector<double>{0.0, 0.0}, s2);
  CHECK(res.reward == doctest::Approx(-0.34).epsilon(1e-12));

  // Out-of-box actions are clamped before scoring.
  env.reset(rng, s);
  res = env.step(std::vector<double>{2.0, -3.0}, s2);
  CHECK(res.reward == doctest::Approx(-(0.25 + 0.49)).epsilon(1e-12));
}

TEST_CASE("environment factory builds from dataset ids") {
  auto pm = steer::make_env("pointmass");
  CHECK(pm->state_dim() == 2);
  CHECK(pm->action_bound() == 0.2);
  auto gb = steer::make_env("bandit");
  CHECK(gb->horizon() == 1);
  auto ch = steer::make_env("chain8");
  CHECK(ch->state_dim() == 9);
  CHECK(ch->id() == "chain8");
  CHECK_THROWS_AS((void)steer::make_env("gridworld"), std::invalid_argument);
  CHECK_THROWS_AS((void)steer::make_env("chainx"), std::invalid_argument);

  // Clones are independent instances.
  Rng rng(42);
  std::vector<double> s(2), s2(2);
  pm->reset(rng, s);
  auto copy = pm->clone();
  pm->step(std::vector<double>{0.2, 0.0}, s);
  copy->step(std::vector<double>{-0.2, 0.0}, s2);
  CHECK(s[0] != s2[0]);
}
