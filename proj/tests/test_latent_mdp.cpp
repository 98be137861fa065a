#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "steer/dataset.hpp"
#include "steer/diffusion.hpp"
#include "steer/envs.hpp"
#include "steer/latent_mdp.hpp"

using steer::ChainMdp;
using steer::Dataset;
using steer::DiffusionConfig;
using steer::DiffusionPolicy;
using steer::FlowConfig;
using steer::FlowPolicy;
using steer::LatentActionMdp;
using steer::LatentStepResult;
using steer::PointMassEnv;
using steer::Rng;
using steer::Tensor;

namespace {

// Flow policy with a zeroed velocity head: decode(s, w) is exactly
// clamp(w, -1, 1) * action_bound, which makes the latent wrapper's behavior
// checkable against the inner environment step by step.
FlowPolicy identity_policy(std::size_t state_dim, std::size_t action_dim,
                           std::size_t chunk, double bound) {
  FlowConfig cfg;
  cfg.shape = {state_dim, action_dim, chunk, bound};
  cfg.hidden = 8;
  cfg.depth = 1;
  Rng rng(7);
  FlowPolicy p(cfg, rng);
  p.velocity().zero_output_layer();
  return p;
}

void fill_batch(const Dataset& d, std::size_t batch, Rng& rng, Tensor& states,
                Tensor& actions) {
  states.resize(batch, d.state_dim);
  actions.resize(batch, d.action_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = rng.integer(d.size());
    std::copy_n(d.state(i), d.state_dim, states.row(b));
    std::copy_n(d.action(i), d.action_dim, actions.row(b));
  }
}

}  // namespace

TEST_CASE("noise clipping clamps componentwise to the box") {
  std::vector<double> w{2.0, -3.0}, out(2);
  steer::clip_noise(w, 1.5, out);
  CHECK(out[0] == 1.5);
  CHECK(out[1] == -1.5);

  std::vector<double> inside{0.7, -1.2};
  steer::clip_noise(inside, 1.5, out);
  CHECK(out[0] == 0.7);
  CHECK(out[1] == -1.2);

  std::vector<double> three(3);
  CHECK_THROWS_AS(steer::clip_noise(w, 1.5, three), std::invalid_argument);
  CHECK_THROWS_AS(steer::clip_noise(w, 0.0, out), std::invalid_argument);
}

TEST_CASE("noise broadcast tiles a per-step latent across the chunk") {
  std::vector<double> w(32);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.01 * static_cast<double>(i);
  std::vector<double> chunk(32 * 50);
  steer::noise_broadcast(w, 50, chunk);
  CHECK(chunk.size() == 1600);
  for (std::size_t c = 0; c < 50; ++c)
    for (std::size_t i = 0; i < 32; ++i) CHECK(chunk[c * 32 + i] == w[i]);

  std::vector<double> same(32);
  steer::noise_broadcast(w, 1, same);
  CHECK(same == w);

  CHECK_THROWS_AS(steer::noise_broadcast(w, 2, same), std::invalid_argument);
  CHECK_THROWS_AS(steer::noise_broadcast(w, 0, same), std::invalid_argument);
}

TEST_CASE("with an identity policy the latent MDP is the inner MDP on the box") {
  PointMassEnv inner, reference;
  FlowPolicy p = identity_policy(2, 2, 1, PointMassEnv::kActionBound);
  LatentActionMdp m(inner, p, 1.5);
  CHECK(m.latent_dim() == 2);
  CHECK(m.chunk_gamma() == inner.gamma());
  CHECK(m.horizon() == PointMassEnv::kHorizon);

  Rng r1(11), r2(11), wr(12);
  std::vector<double> s1(2), s2(2), n1(2), n2(2), w(2), a(2), expect(2);
  for (int ep = 0; ep < 4; ++ep) {
    m.reset(r1, s1);
    reference.reset(r2, s2);
    CHECK(s1 == s2);
    while (true) {
      w[0] = wr.uniform(-2.5, 2.5);
      w[1] = wr.uniform(-2.5, 2.5);
      // Box clip to 1.5 first, then the policy's own [-1, 1] clamp and scale.
      for (int k = 0; k < 2; ++k)
        expect[k] = std::clamp(std::clamp(w[k], -1.5, 1.5), -1.0, 1.0) *
                    PointMassEnv::kActionBound;
      LatentStepResult res = m.step(w, n1, a);
      steer::StepResult ref = reference.step(expect, n2);
      CHECK(a == expect);
      CHECK(n1 == n2);
      CHECK(res.reward == ref.reward);
      CHECK(res.done == ref.done);
      if (res.done) break;
    }
  }
}

TEST_CASE("a chunk aggregates sub-rewards with the inner discount") {
  ChainMdp inner(5);  // start at 2, right end at 5: three right moves pay off
  FlowPolicy p = identity_policy(inner.state_dim(), 1, 4, 1.0);
  LatentActionMdp m(inner, p, 1.5);
  CHECK(m.latent_dim() == 4);
  CHECK(m.chunk_gamma() == doctest::Approx(std::pow(inner.gamma(), 4)));
  CHECK(m.horizon() == 10);  // inner horizon 40 in chunks of 4

  Rng rng(13);
  std::vector<double> s(inner.state_dim()), w{1.0, 1.0, 1.0, 1.0}, a(4);
  m.reset(rng, s);
  LatentStepResult res = m.step(w, s, a);
  // Sub-rewards (0, 0, 1) with termination on the third sub-step.
  CHECK(res.done);
  CHECK(res.reward == inner.gamma() * inner.gamma());
  CHECK(s[5] == 1.0);

  // All-zero sub-rewards aggregate to zero and the episode continues.
  m.reset(rng, s);
  std::fill(w.begin(), w.end(), 0.0);
  res = m.step(w, s, a);
  CHECK(res.reward == 0.0);
  CHECK_FALSE(res.done);
}

TEST_CASE("chunked returns with the per-chunk discount match raw returns") {
  // Steer the identity policy straight at the right goal with chunk 3; the
  // terminal reward lands mid-chunk, so the check exercises the discount
  // bookkeeping on both sides.
  PointMassEnv inner;
  FlowPolicy p = identity_policy(2, 2, 3, PointMassEnv::kActionBound);
  LatentActionMdp m(inner, p, 2.0);

  Rng rng(14);
  std::vector<double> s(2), w(6), a(6);
  m.reset(rng, s);
  double chunked = 0.0, chunk_discount = 1.0;
  std::vector<double> sub_rewards;
  bool done = false;
  while (!done) {
    std::vector<double> dir{1.0, -s[1] * 5.0};  // push x, damp y
    steer::noise_broadcast(dir, 3, w);
    const std::vector<double> before = s;
    LatentStepResult res = m.step(w, s, a);
    chunked += chunk_discount * res.reward;
    chunk_discount *= m.chunk_gamma();
    done = res.done;

    // Replay the decoded actions on a copy to recover per-sub-step rewards.
    PointMassEnv replay;
    replay.reset_to(before);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> nxt(2);
      steer::StepResult sub =
          replay.step(std::span<const double>(a).subspan(2 * i, 2), nxt);
      sub_rewards.push_back(sub.reward);
      if (sub.done) break;
    }
  }
  REQUIRE(!sub_rewards.empty());
  CHECK(sub_rewards.back() == 1.0);  // reached the paying goal
  double raw = 0.0, discount = 1.0;
  for (double r : sub_rewards) {
    raw += discount * r;
    discount *= inner.gamma();
  }
  CHECK(chunked == doctest::Approx(raw).epsilon(1e-12));
}

TEST_CASE("wrapper construction and stepping validate shapes") {
  PointMassEnv env;
  FlowPolicy wrong_state = identity_policy(3, 2, 1, 0.2);
  CHECK_THROWS_AS(LatentActionMdp(env, wrong_state, 1.5),
                  std::invalid_argument);
  FlowPolicy wrong_action = identity_policy(2, 1, 1, 0.2);
  CHECK_THROWS_AS(LatentActionMdp(env, wrong_action, 1.5),
                  std::invalid_argument);
  FlowPolicy ok = identity_policy(2, 2, 1, 0.2);
  CHECK_THROWS_AS(LatentActionMdp(env, ok, -1.0), std::invalid_argument);

  LatentActionMdp m(env, ok, 1.5);
  Rng rng(15);
  std::vector<double> s(2), a(2);
  m.reset(rng, s);
  std::vector<double> bad_w(3);
  CHECK_THROWS_AS(m.step(bad_w, s, a), std::invalid_argument);
  std::vector<double> w(2), bad_a(5);
  CHECK_THROWS_AS(m.step(w, s, bad_a), std::invalid_argument);
}

TEST_CASE("latent grid scan finds both modes and steers to either goal") {
  PointMassEnv env;
  Rng demo_rng(16);
  Dataset demos = steer::generate_demos(env, 0.5, 300, demo_rng);

  DiffusionConfig cfg;
  cfg.shape = {2, 2, 1, PointMassEnv::kActionBound};
  cfg.hidden = 64;
  cfg.depth = 2;
  cfg.lr = 2e-3;
  Rng rng(17);
  DiffusionPolicy policy(cfg, rng);
  Tensor states, actions;
  for (int step = 0; step < 6000; ++step) {
    fill_batch(demos, 128, rng, states, actions);
    policy.bc_train_step(states, actions, rng);
  }

  // Brute-force scan of a 41x41 latent grid at the start state: the decoded
  // first-axis action should take both signs (the two goal modes) and the
  // extreme latents should steer whole episodes to the matching goal.
  const int n = 41;
  Tensor grid_s(n * n, 2), grid_w(n * n, 2), grid_a(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int r = i * n + j;
      grid_w(r, 0) = -1.5 + 3.0 * i / (n - 1);
      grid_w(r, 1) = -1.5 + 3.0 * j / (n - 1);
    }
  policy.decode_batch(grid_s, grid_w, grid_a);
  std::size_t best_right = 0, best_left = 0;
  for (int r = 1; r < n * n; ++r) {
    if (grid_a(r, 0) > grid_a(best_right, 0)) best_right = r;
    if (grid_a(r, 0) < grid_a(best_left, 0)) best_left = r;
  }
  CHECK(grid_a(best_right, 0) > 0.1);
  CHECK(grid_a(best_left, 0) < -0.1);

  auto run = [&](const double* w_row, bool& rewarded, bool& left) {
    PointMassEnv inner;
    LatentActionMdp m(inner, policy, 1.5);
    std::vector<double> s(2), a(2);
    std::vector<double> w{w_row[0], w_row[1]};
    m.reset(rng, s);
    LatentStepResult res;
    do {
      res = m.step(w, s, a);
    } while (!res.done);
    rewarded = res.reward > 0.0;
    left = PointMassEnv::in_left_goal(s);
  };

  int right_hits = 0, left_hits = 0;
  for (int ep = 0; ep < 5; ++ep) {
    bool rewarded = false, left = false;
    run(grid_w.row(best_right), rewarded, left);
    if (rewarded) ++right_hits;
    run(grid_w.row(best_left), rewarded, left);
    if (!rewarded && left) ++left_hits;
  }
  CHECK(right_hits >= 4);
  CHECK(left_hits >= 4);
}
