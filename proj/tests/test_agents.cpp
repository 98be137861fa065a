#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "steer/agents.hpp"
#include "steer/diffusion.hpp"
#include "steer/envs.hpp"
#include "steer/latent_mdp.hpp"

using steer::ActorConfig;
using steer::ActorSample;
using steer::Batch;
using steer::ChainMdp;
using steer::CriticAgg;
using steer::CriticConfig;
using steer::CriticEnsemble;
using steer::FlowConfig;
using steer::FlowPolicy;
using steer::GoalBandit;
using steer::Mlp;
using steer::NaAgent;
using steer::NaConfig;
using steer::ReplayBuffer;
using steer::Rng;
using steer::SacAgent;
using steer::SacConfig;
using steer::SquashedActor;
using steer::Temperature;
using steer::Tensor;
using steer::UpdateMetrics;

namespace {

// Writes a single-layer net (depth 0) to compute weights . x + bias exactly.
void set_linear_row(Mlp& net, std::span<const double> weights, double bias) {
  REQUIRE(net.layer_count() == 1);
  const Mlp::LayerView lv = net.layer(0);
  REQUIRE(lv.in == weights.size());
  REQUIRE(lv.out == 1);
  auto params = net.params();
  for (std::size_t i = 0; i < lv.in; ++i) params[lv.w + i] = weights[i];
  params[lv.b] = bias;
}

// Sets the output-layer biases so mu and log-std are state-independent.
void pin_heads(SquashedActor& actor, std::span<const double> mu,
               double logstd) {
  actor.net().zero_output_layer();
  const Mlp::LayerView lv = actor.net().layer(actor.net().layer_count() - 1);
  auto params = actor.net().params();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    params[lv.b + i] = mu[i];
    params[lv.b + mu.size() + i] = logstd;
  }
}

double squash_density(double w, double bound, double mu, double sigma) {
  const double pre = std::atanh(w / bound);
  const double z = (pre - mu) / sigma;
  const double gauss =
      std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
  const double jac = bound * (1.0 - std::tanh(pre) * std::tanh(pre));
  return gauss / jac;
}

FlowPolicy identity_policy(std::size_t state_dim, std::size_t action_dim,
                           double bound) {
  FlowConfig cfg;
  cfg.shape = {state_dim, action_dim, 1, bound};
  cfg.hidden = 8;
  cfg.depth = 1;
  Rng rng(3);
  FlowPolicy p(cfg, rng);
  p.velocity().zero_output_layer();
  return p;
}

// Infinite-horizon optimal values of a chain by iterating the enumerable
// dynamics to a fixed point.
std::map<std::pair<int, int>, double> chain_value_iteration(const ChainMdp& env) {
  const int n = static_cast<int>(env.n_states());
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::map<std::pair<int, int>, double> q;
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double delta = 0.0;
    for (int s = 1; s < n; ++s) {
      double best = -1e300;
      for (int e = -1; e <= 1; ++e) {
        const ChainMdp::Outcome o = env.lookup(static_cast<std::size_t>(s), e);
        const double qv =
            o.reward + (o.terminal ? 0.0 : env.gamma() * v[static_cast<std::size_t>(o.next)]);
        q[{s, e}] = qv;
        best = std::max(best, qv);
      }
      delta = std::max(delta, std::fabs(best - v[static_cast<std::size_t>(s)]));
      v[static_cast<std::size_t>(s)] = best;
    }
    if (delta < 1e-14) break;
  }
  return q;
}

// Uniform draw inside one effect region of the unit action box, away from
// the decision thresholds so function approximation has room.
double effect_region_draw(int effect, Rng& rng) {
  const double th = ChainMdp::kThreshold, margin = 0.03;
  if (effect < 0) return rng.uniform(-1.0, -th - margin);
  if (effect > 0) return rng.uniform(th + margin, 1.0);
  return rng.uniform(-th + margin, th - margin);
}

void one_hot(int s, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(s)] = 1.0;
}

}  // namespace

TEST_CASE("actor sampling collapses to the squashed mean as sigma vanishes") {
  ActorConfig cfg{2, 2, 1.5, 16, 1, steer::Activation::Tanh, 3e-4};
  Rng rng(21);
  SquashedActor actor(cfg, rng);
  std::vector<double> mu{0.5, -1.0};
  pin_heads(actor, mu, -18.0);  // sigma = e^-18

  Tensor states(3, 2);
  rng.normal_fill(states.data);
  ActorSample s;
  actor.sample_batch(states, rng, s);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(s.w(r, 0) == doctest::Approx(1.5 * std::tanh(0.5)).epsilon(1e-6));
    CHECK(s.w(r, 1) == doctest::Approx(1.5 * std::tanh(-1.0)).epsilon(1e-6));
    CHECK(std::isfinite(s.logp[r]));
  }

  // Deterministic mode is exactly bound * tanh(mu).
  std::vector<double> w(2);
  actor.act_mean(std::span<const double>(states.row(0), 2), w);
  CHECK(w[0] == 1.5 * std::tanh(0.5));
  CHECK(w[1] == 1.5 * std::tanh(-1.0));

  // Samples always land strictly inside the box.
  pin_heads(actor, mu, 2.0);  // large sigma
  actor.sample_batch(states, rng, s);
  for (double v : s.w.data) CHECK(std::fabs(v) < 1.5);
}

TEST_CASE("sampled log-probabilities are a normalized density over the box") {
  ActorConfig cfg{1, 1, 1.5, 16, 1, steer::Activation::Tanh, 3e-4};
  Rng rng(22);
  SquashedActor actor(cfg, rng);
  const double mu = 0.3, logstd = std::log(0.8);
  pin_heads(actor, {&mu, 1}, logstd);

  // Quadrature of the closed-form density over the open box.
  const int n = 40001;
  double integral = 0.0;
  const double lo = -1.5 + 1e-9, hi = 1.5 - 1e-9, h = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double w = lo + h * i;
    const double p = squash_density(w, 1.5, mu, 0.8);
    integral += (i == 0 || i == n - 1) ? 0.5 * p : p;
  }
  integral *= h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

  // The sampler's own logp agrees with that density at its samples.
  Tensor states(256, 1, 0.0);
  ActorSample s;
  actor.sample_batch(states, rng, s);
  for (std::size_t r = 0; r < 256; ++r) {
    const double ref = std::log(squash_density(s.w(r, 0), 1.5, mu, 0.8));
    CHECK(s.logp[r] == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("actor gradients match finite differences through the sample") {
  ActorConfig cfg{3, 2, 1.5, 8, 1, steer::Activation::Tanh, 3e-4};
  Rng init(23);
  SquashedActor actor(cfg, init);
  Tensor states(4, 3);
  init.normal_fill(states.data);
  Tensor upstream_w(4, 2);
  init.normal_fill(upstream_w.data);
  std::vector<double> upstream_lp(4);
  init.normal_fill(upstream_lp);

  // Loss: sum of upstream-weighted sample coordinates and log-probs, with
  // the noise draw replayed identically for every evaluation.
  const auto loss = [&]() {
    Rng noise(77);
    ActorSample s;
    actor.sample_batch(states, noise, s);
    double L = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t i = 0; i < 2; ++i) L += upstream_w(r, i) * s.w(r, i);
      L += upstream_lp[r] * s.logp[r];
    }
    return L;
  };

  Rng noise(77);
  ActorSample s;
  actor.sample_batch(states, noise, s);
  std::vector<double> analytic;
  actor.grads(s, upstream_w, upstream_lp, analytic);

  auto params = actor.net().params();
  REQUIRE(analytic.size() == params.size());
  const double hstep = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double keep = params[k];
    params[k] = keep + hstep;
    const double up = loss();
    params[k] = keep - hstep;
    const double down = loss();
    params[k] = keep;
    const double fd = (up - down) / (2.0 * hstep);
    worst = std::max(worst,
                     std::fabs(fd - analytic[k]) / std::max(1.0, std::fabs(fd)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("temperature adapts against the entropy gap") {
  Temperature hot(0.5, 0.0, 1e-2);
  for (int i = 0; i < 50; ++i) hot.step(-5.0);  // entropy 5 above target
  CHECK(hot.alpha() < 0.5);
  CHECK(hot.alpha() > 0.0);

  Temperature cold(0.5, 0.0, 1e-2);
  for (int i = 0; i < 50; ++i) cold.step(5.0);  // entropy below target
  CHECK(cold.alpha() > 0.5);
}

TEST_CASE("polyak moves targets exactly tau toward online weights") {
  CriticConfig cfg{3, 2, 1, 8, 1, steer::Activation::Tanh, CriticAgg::Min,
                   3e-4, 0.005};
  Rng rng(24);
  CriticEnsemble c(cfg, rng);
  // Targets start as copies; perturb the online net to open a gap.
  std::vector<double> before(c.target(0).params().begin(),
                             c.target(0).params().end());
  for (double& p : c.net(0).params()) p += 0.37;
  c.polyak();
  auto online = c.net(0).params();
  auto tgt = c.target(0).params();
  for (std::size_t k = 0; k < tgt.size(); ++k)
    CHECK(tgt[k] == before[k] + 0.005 * (online[k] - before[k]));

  // Repeated updates contract the gap geometrically at rate 1 - tau.
  for (int i = 0; i < 199; ++i) c.polyak();
  const double shrink = std::pow(1.0 - 0.005, 200);
  for (std::size_t k = 0; k < tgt.size(); ++k) {
    const double expect = online[k] + shrink * (before[k] - online[k]);
    CHECK(tgt[k] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("replay buffer ring keeps the newest transitions") {
  ReplayBuffer buf(4, 2, 1);
  std::vector<double> s{0.0, 0.0}, a{0.0};
  for (int i = 1; i <= 6; ++i)
    buf.append(s, a, static_cast<double>(i), s, i % 2 == 0);
  CHECK(buf.size() == 4);
  // Slots now hold 5, 6, 3, 4 — the oldest two were overwritten.
  std::vector<double> kept;
  for (std::size_t i = 0; i < buf.size(); ++i) kept.push_back(buf.reward_at(i));
  std::sort(kept.begin(), kept.end());
  CHECK(kept == std::vector<double>{3.0, 4.0, 5.0, 6.0});

  Rng rng(25);
  Batch b;
  buf.sample(64, rng, b);
  for (std::size_t r = 0; r < 64; ++r) {
    CHECK(b.r[r] >= 3.0);
    CHECK(b.done[r] == (static_cast<int>(b.r[r]) % 2 == 0 ? 1.0 : 0.0));
  }

  ReplayBuffer empty(4, 2, 1);
  CHECK_THROWS_AS(empty.sample(8, rng, b), std::logic_error);
  CHECK_THROWS_AS(buf.append(s, a, 0.0, s, false, std::vector<double>{1.0}),
                  std::invalid_argument);
  ReplayBuffer latent(4, 2, 1, 3);
  CHECK_THROWS_AS(latent.append(s, a, 0.0, s, false), std::invalid_argument);
}

TEST_CASE("replay sampling is uniform across slots") {
  ReplayBuffer buf(100, 1, 1);
  std::vector<double> s{0.0};
  for (int i = 0; i < 100; ++i)
    buf.append(s, s, static_cast<double>(i), s, false);
  Rng rng(26);
  std::vector<int> counts(100, 0);
  Batch b;
  for (int round = 0; round < 100; ++round) {
    buf.sample(1000, rng, b);
    for (double r : b.r) ++counts[static_cast<std::size_t>(r)];
  }
  double chi2 = 0.0;
  for (int c : counts) {
    const double diff = c - 1000.0;
    chi2 += diff * diff / 1000.0;
  }
  CHECK(chi2 < 134.64);  // df=99 critical value at p=0.01
}

TEST_CASE("critic regression sees reward-only targets on terminal rows") {
  SacConfig cfg;
  cfg.state_dim = 2;
  cfg.latent_dim = 2;
  cfg.noise_bound = 1.5;
  cfg.hidden = 8;
  cfg.depth = 0;  // pure linear critics
  cfg.n_critics = 1;
  cfg.init_alpha = 1e-12;
  cfg.alpha_lr = 0.0;
  Rng rng(27);
  SacAgent agent(cfg, rng);
  agent.critics().net(0).zero_output_layer();
  agent.critics().target(0).zero_output_layer();

  Batch b;
  b.s.resize(4, 2);
  b.w.resize(4, 2);
  b.s2.resize(4, 2);
  rng.normal_fill(b.s.data);
  rng.normal_fill(b.w.data);
  rng.normal_fill(b.s2.data);
  b.r = {0.3, -0.7, 1.1, 0.0};
  b.done = {1.0, 1.0, 0.0, 1.0};  // row 2 bootstraps on an all-zero target net

  UpdateMetrics m = agent.update(b, rng);
  double expect = 0.0;
  for (double r : b.r) expect += r * r / 4.0;
  CHECK(m.critic_loss == doctest::Approx(expect).epsilon(1e-8));

  Batch bad;
  CHECK_THROWS_AS(agent.update(bad, rng), std::invalid_argument);
}

TEST_CASE("adding a constant to the latent critic leaves the actor step unchanged") {
  auto build = [](double bias) {
    NaConfig cfg;
    cfg.state_dim = 2;
    cfg.latent_dim = 2;
    cfg.noise_bound = 1.5;
    cfg.depth = 0;
    cfg.n_qa = 1;
    cfg.n_qw = 1;
    cfg.init_alpha = 1e-12;
    cfg.alpha_lr = 0.0;
    Rng rng(28);
    NaAgent agent(cfg, rng);
    const std::vector<double> g{0.0, 0.0, 0.7, -0.4};  // reads only the w part
    set_linear_row(agent.qw().net(0), g, bias);
    return agent;
  };
  NaAgent a = build(0.0), b = build(7.0);
  Tensor states(8, 2);
  Rng sr(29);
  sr.normal_fill(states.data);
  Rng r1(30), r2(30);
  a.actor_update(states, r1);
  b.actor_update(states, r2);
  std::vector<double> wa(2), wb(2);
  for (std::size_t r = 0; r < 8; ++r) {
    a.act_mean(std::span<const double>(states.row(r), 2), wa);
    b.act_mean(std::span<const double>(states.row(r), 2), wb);
    CHECK(wa == wb);
  }

  // And the step direction follows the critic's latent gradient signs.
  std::vector<double> before(2), after(2);
  NaAgent c = build(0.0);
  std::vector<double> probe{0.2, -0.4};
  c.act_mean(probe, before);
  Rng r3(31);
  for (int i = 0; i < 60; ++i) c.actor_update(states, r3);
  c.act_mean(probe, after);
  CHECK(after[0] > before[0]);
  CHECK(after[1] < before[1]);
}

TEST_CASE("actor ascent on a quadratic latent critic finds its peak") {
  ActorConfig cfg{1, 1, 1.5, 32, 2, steer::Activation::Tanh, 1e-3};
  Rng rng(32);
  SquashedActor actor(cfg, rng);
  Tensor states(16, 1, 0.0);
  ActorSample s;
  Tensor dl_dw(16, 1);
  std::vector<double> dl_dlogp(16, 0.0), grads;
  for (int step = 0; step < 3000; ++step) {
    actor.sample_batch(states, rng, s);
    // Maximize Q(w) = -(w - 0.7)^2: dL/dw = 2 (w - 0.7) / B.
    for (std::size_t r = 0; r < 16; ++r)
      dl_dw(r, 0) = 2.0 * (s.w(r, 0) - 0.7) / 16.0;
    actor.grads(s, dl_dw, dl_dlogp, grads);
    actor.step(grads);
  }
  std::vector<double> state{0.0}, w(1);
  actor.act_mean(state, w);
  CHECK(w[0] == doctest::Approx(0.7).epsilon(0.08));
}

TEST_CASE("latent SAC learns the one-step bandit to the scripted tolerance") {
  GoalBandit env;
  FlowPolicy policy = identity_policy(1, 2, 1.0);
  steer::LatentActionMdp mdp(env, policy, 1.5);

  SacConfig cfg;
  cfg.state_dim = 1;
  cfg.latent_dim = 2;
  cfg.noise_bound = 1.5;
  cfg.hidden = 32;
  cfg.depth = 2;
  cfg.lr = 1e-3;
  cfg.gamma = mdp.chunk_gamma();
  cfg.init_alpha = 0.1;
  cfg.alpha_lr = 1e-3;
  Rng rng(33);
  SacAgent agent(cfg, rng);
  ReplayBuffer buf(8192, 1, 2, 2);

  std::vector<double> s(1), s2(1), w(2), wc(2), a(2);
  Batch batch;
  for (int episode = 0; episode < 3000; ++episode) {
    mdp.reset(rng, s);
    agent.act(s, rng, w);
    steer::clip_noise(w, 1.5, wc);
    const steer::LatentStepResult res = mdp.step(wc, s2, a);
    buf.append(s, a, res.reward, s2, res.done, wc);
    if (buf.size() >= 256) {
      buf.sample(64, rng, batch);
      agent.update(batch, rng);
    }
  }

  std::vector<double> wm(2), am(2);
  s[0] = 0.0;
  agent.act_mean(s, wm);
  policy.decode(s, wm, am);
  const double dist = std::hypot(am[0] - GoalBandit::kTarget[0],
                                 am[1] - GoalBandit::kTarget[1]);
  CHECK(dist < 0.1);
}

TEST_CASE("both agents recover value iteration on an enumerable chain") {
  ChainMdp env(3);
  const auto q_star = chain_value_iteration(env);
  const std::size_t S = env.state_dim();
  FlowPolicy policy = identity_policy(S, 1, 1.0);
  Rng rng(34);

  // Synthetic uniformly-covered batches straight from the enumerable
  // dynamics: nonterminal states x effect regions, with the latent drawn
  // inside the region it realizes.
  const auto fill = [&](Batch& b, std::size_t n) {
    b.s.resize(n, S);
    b.a.resize(n, 1);
    b.w.resize(n, 1);
    b.s2.resize(n, S);
    b.r.resize(n);
    b.done.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int st = 1 + static_cast<int>(rng.integer(env.n_states() - 1));
      const int effect = static_cast<int>(rng.integer(3)) - 1;
      const double w = effect_region_draw(effect, rng);
      const ChainMdp::Outcome o = env.lookup(st, effect);
      one_hot(st, {b.s.row(i), S});
      b.a(i, 0) = w;  // identity policy: decoded action equals the latent
      b.w(i, 0) = w;
      one_hot(static_cast<int>(o.next), {b.s2.row(i), S});
      b.r[i] = o.reward;
      b.done[i] = o.terminal ? 1.0 : 0.0;
    }
  };

  SacConfig scfg;
  scfg.state_dim = S;
  scfg.latent_dim = 1;
  scfg.noise_bound = 1.0;
  scfg.hidden = 32;
  scfg.depth = 2;
  scfg.lr = 1e-3;
  scfg.tau = 0.01;
  scfg.gamma = env.gamma();
  scfg.init_alpha = 1e-3;
  scfg.alpha_lr = 0.0;
  SacAgent sac(scfg, rng);
  Batch b;
  for (int step = 0; step < 9000; ++step) {
    fill(b, 64);
    sac.update(b, rng);
  }

  NaConfig ncfg;
  ncfg.state_dim = S;
  ncfg.latent_dim = 1;
  ncfg.noise_bound = 1.0;
  ncfg.hidden = 32;
  ncfg.depth = 2;
  ncfg.lr = 1e-3;
  ncfg.tau = 0.01;
  ncfg.gamma = env.gamma();
  ncfg.init_alpha = 1e-3;
  ncfg.alpha_lr = 0.0;
  NaAgent na(ncfg, rng);
  Tensor all_states(2 * static_cast<std::size_t>(env.n_states() - 1), S);
  {
    std::size_t row = 0;
    for (int st = 1; st < static_cast<int>(env.n_states()); ++st) {
      one_hot(st, {all_states.row(row), S});
      one_hot(st, {all_states.row(row + 1), S});
      row += 2;
    }
  }
  for (int step = 0; step < 9000; ++step) {
    fill(b, 64);
    na.qa_update(b, policy, rng);
    na.qw_distill(b.s, policy, rng);
    na.actor_update(b.s, rng);
  }

  // Probe latents sit mid-region; compare against the oracle Q values.
  const std::vector<std::pair<double, int>> probes{
      {-0.8, -1}, {0.0, 0}, {0.8, 1}};
  std::vector<double> state(S), one(1);
  for (int st = 1; st < static_cast<int>(env.n_states()); ++st) {
    one_hot(st, state);
    for (const auto& [wv, effect] : probes) {
      const double oracle = q_star.at({st, effect});
      Tensor sx(1, S + 1);
      std::copy(state.begin(), state.end(), sx.row(0));
      sx(0, S) = wv;
      std::vector<double> qs(1), qn(1);
      sac.critics().values(sx, qs);
      na.qa().values(sx, qn);
      CHECK(qs[0] == doctest::Approx(oracle).epsilon(0.015));
      CHECK(qn[0] == doctest::Approx(oracle).epsilon(0.015));
    }

    // Greedy latents decode to the optimal move-right action in both agents.
    sac.act_mean(state, one);
    CHECK(ChainMdp::effect_of(one[0]) == 1);
    na.act_mean(state, one);
    CHECK(ChainMdp::effect_of(one[0]) == 1);

    // Distillation consistency: the latent critic tracks the action critic
    // composed with the policy across a dense latent grid.
    for (int k = 0; k <= 40; ++k) {
      const double wv = -1.0 + 0.05 * k;
      if (std::fabs(std::fabs(wv) - ChainMdp::kThreshold) < 0.08) continue;
      Tensor sw(1, S + 1), sa(1, S + 1);
      std::copy(state.begin(), state.end(), sw.row(0));
      std::copy(state.begin(), state.end(), sa.row(0));
      sw(0, S) = wv;
      sa(0, S) = wv;  // identity policy
      std::vector<double> qw_v(1), qa_v(1);
      na.qw().values(sw, qw_v);
      na.qa().values(sa, qa_v);
      CHECK(std::fabs(qw_v[0] - qa_v[0]) < 0.05);
    }
  }
}

TEST_CASE("distillation collapses to a constant under an aliasing policy") {
  // A policy map that ignores its latent entirely: every w decodes to the
  // same action, so the distilled critic must become flat in w.
  struct ConstantPolicy final : steer::PolicyMap {
    std::size_t state_dim() const override { return 2; }
    std::size_t action_dim() const override { return 2; }
    std::size_t chunk() const override { return 1; }
    std::size_t latent_dim() const override { return 2; }
    void decode(std::span<const double>, std::span<const double>,
                std::span<double> actions) const override {
      actions[0] = 0.3;
      actions[1] = -0.2;
    }
    void decode_batch(const Tensor& states, const Tensor&,
                      Tensor& actions) const override {
      actions.resize(states.rows(), 2);
      for (std::size_t r = 0; r < states.rows(); ++r) {
        actions(r, 0) = 0.3;
        actions(r, 1) = -0.2;
      }
    }
  } constant;

  NaConfig cfg;
  cfg.state_dim = 2;
  cfg.latent_dim = 2;
  cfg.noise_bound = 1.5;
  cfg.hidden = 32;
  cfg.depth = 2;
  cfg.lr = 1e-3;
  Rng rng(35);
  NaAgent agent(cfg, rng);

  // Give the action critic a meaningful O(1) landscape first, so the
  // aliasing comparison is between well-scaled values rather than the
  // near-zero outputs of a freshly initialized network.
  Tensor sa_train(64, 4);
  std::vector<double> fit(64);
  for (int step = 0; step < 3000; ++step) {
    for (std::size_t r = 0; r < 64; ++r) {
      sa_train(r, 0) = rng.normal();
      sa_train(r, 1) = rng.normal();
      sa_train(r, 2) = rng.uniform(-1.0, 1.0);
      sa_train(r, 3) = rng.uniform(-1.0, 1.0);
      fit[r] = 3.0 * sa_train(r, 2) + sa_train(r, 3) + sa_train(r, 0) -
               0.5 * sa_train(r, 1);
    }
    agent.qa().mse_step(sa_train, fit);
  }

  Tensor states(16, 2);
  rng.normal_fill(states.data);
  for (int step = 0; step < 5000; ++step)
    agent.qw_distill(states, constant, rng);
  // Adam's steady-state wobble scales with the learning rate; an annealed
  // polish phase settles the fit onto the flat target.
  for (std::size_t i = 0; i < agent.qw().size(); ++i)
    agent.qw().opt(i).set_lr(1e-4);
  for (int step = 0; step < 10000; ++step)
    agent.qw_distill(states, constant, rng);

  // Q^A at the aliased action, per state.
  Tensor sa;
  Tensor a;
  constant.decode_batch(states, states, a);
  steer::concat_cols(states, a, sa);
  std::vector<double> qa_v(16);
  agent.qa().values(sa, qa_v);

  Rng wr(36);
  for (std::size_t r = 0; r < 5; ++r) {
    for (int k = 0; k < 25; ++k) {
      Tensor sw(1, 4);
      sw(0, 0) = states(r, 0);
      sw(0, 1) = states(r, 1);
      sw(0, 2) = wr.uniform(-1.5, 1.5);
      sw(0, 3) = wr.uniform(-1.5, 1.5);
      std::vector<double> qw_v(1);
      agent.qw().values(sw, qw_v);
      CHECK(qw_v[0] == doctest::Approx(qa_v[r]).epsilon(1e-2));
    }
  }
}

TEST_CASE("distilled values track the critic-policy composition on a grid") {
  // Hand-built bimodal policy: the first latent coordinate picks the mode.
  struct BimodalPolicy final : steer::PolicyMap {
    std::size_t state_dim() const override { return 2; }
    std::size_t action_dim() const override { return 2; }
    std::size_t chunk() const override { return 1; }
    std::size_t latent_dim() const override { return 2; }
    void decode(std::span<const double>, std::span<const double> w,
                std::span<double> a) const override {
      a[0] = 0.15 * std::tanh(4.0 * w[0]);
      a[1] = 0.1 * w[1];
    }
    void decode_batch(const Tensor& states, const Tensor& w,
                      Tensor& a) const override {
      a.resize(states.rows(), 2);
      for (std::size_t r = 0; r < states.rows(); ++r)
        decode({}, {w.row(r), 2}, {a.row(r), 2});
    }
  } bimodal;

  NaConfig cfg;
  cfg.state_dim = 2;
  cfg.latent_dim = 2;
  cfg.noise_bound = 1.5;
  cfg.hidden = 32;
  cfg.depth = 2;
  cfg.lr = 1e-3;
  Rng rng(37);
  NaAgent agent(cfg, rng);

  // Give the action critic a decided preference for the right mode by
  // direct regression onto q(s, a) = 3 a_x + a_y.
  Tensor s(64, 2), a(64, 2), sa;
  std::vector<double> target(64);
  for (int step = 0; step < 4000; ++step) {
    rng.normal_fill(s.data);
    for (auto& v : a.data) v = rng.uniform(-0.2, 0.2);
    steer::concat_cols(s, a, sa);
    for (std::size_t r = 0; r < 64; ++r)
      target[r] = 3.0 * a(r, 0) + a(r, 1);
    agent.qa().mse_step(sa, target);
  }

  Tensor s0(64, 2, 0.0);
  for (int step = 0; step < 6000; ++step)
    agent.qw_distill(s0, bimodal, rng);

  // Correlation between the distilled surface and the composition over a
  // 41x41 latent grid at the probe state.
  const int n = 41;
  Tensor grid_s(n * n, 2, 0.0), grid_w(n * n, 2), dec, comp_in;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      grid_w(i * n + j, 0) = -1.5 + 3.0 * i / (n - 1);
      grid_w(i * n + j, 1) = -1.5 + 3.0 * j / (n - 1);
    }
  bimodal.decode_batch(grid_s, grid_w, dec);
  steer::concat_cols(grid_s, dec, comp_in);
  std::vector<double> comp(n * n), qw_v(n * n);
  agent.qa().values(comp_in, comp);
  Tensor sw;
  steer::concat_cols(grid_s, grid_w, sw);
  agent.qw().values(sw, qw_v);

  double mc = 0.0, mq = 0.0;
  for (int i = 0; i < n * n; ++i) {
    mc += comp[i] / (n * n);
    mq += qw_v[i] / (n * n);
  }
  double num = 0.0, dc = 0.0, dq = 0.0;
  for (int i = 0; i < n * n; ++i) {
    num += (comp[i] - mc) * (qw_v[i] - mq);
    dc += (comp[i] - mc) * (comp[i] - mc);
    dq += (qw_v[i] - mq) * (qw_v[i] - mq);
  }
  CHECK(num / std::sqrt(dc * dq) > 0.95);
}

TEST_CASE("agent checkpoints restore bit-identical behavior") {
  SacConfig scfg;
  scfg.state_dim = 2;
  scfg.latent_dim = 2;
  scfg.hidden = 16;
  scfg.depth = 1;
  Rng rng(38);
  SacAgent sac(scfg, rng);
  Batch b;
  b.s.resize(8, 2);
  b.w.resize(8, 2);
  b.s2.resize(8, 2);
  rng.normal_fill(b.s.data);
  for (auto& v : b.w.data) v = rng.uniform(-1.4, 1.4);
  rng.normal_fill(b.s2.data);
  b.r.assign(8, 0.5);
  b.done.assign(8, 0.0);
  for (int i = 0; i < 20; ++i) sac.update(b, rng);
  sac.save("sac_ckpt.bin");
  SacAgent back = SacAgent::load("sac_ckpt.bin");
  std::remove("sac_ckpt.bin");

  std::vector<double> w1(2), w2(2), probe{0.3, -0.8};
  sac.act_mean(probe, w1);
  back.act_mean(probe, w2);
  CHECK(w1 == w2);
  // Resumed training stays on the exact same trajectory.
  Rng r1(39), r2(39);
  const UpdateMetrics m1 = sac.update(b, r1);
  const UpdateMetrics m2 = back.update(b, r2);
  CHECK(m1.critic_loss == m2.critic_loss);
  CHECK(m1.actor_loss == m2.actor_loss);
  CHECK(m1.alpha == m2.alpha);
  sac.act_mean(probe, w1);
  back.act_mean(probe, w2);
  CHECK(w1 == w2);

  NaConfig ncfg;
  ncfg.state_dim = 2;
  ncfg.latent_dim = 2;
  ncfg.hidden = 16;
  ncfg.depth = 1;
  Rng nrng(40);
  NaAgent na(ncfg, nrng);
  FlowPolicy policy = identity_policy(2, 2, 1.0);
  b.a = b.w;
  for (int i = 0; i < 10; ++i) {
    na.qa_update(b, policy, nrng);
    na.qw_distill(b.s, policy, nrng);
    na.actor_update(b.s, nrng);
  }
  na.save("na_ckpt.bin");
  NaAgent nback = NaAgent::load("na_ckpt.bin");
  std::remove("na_ckpt.bin");
  na.act_mean(probe, w1);
  nback.act_mean(probe, w2);
  CHECK(w1 == w2);
  Rng r3(41), r4(41);
  CHECK(na.qa_update(b, policy, r3) == nback.qa_update(b, policy, r4));

  na.save("kind_ckpt.bin");
  CHECK_THROWS_AS((void)SacAgent::load("kind_ckpt.bin"), std::runtime_error);
  std::remove("kind_ckpt.bin");
}
