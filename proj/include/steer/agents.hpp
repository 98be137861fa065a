#pragma once

#include <string>

#include "steer/actor.hpp"
#include "steer/critic.hpp"
#include "steer/policy_map.hpp"
#include "steer/replay.hpp"

namespace steer {

// Dual variable for the entropy constraint. alpha shrinks when policy
// entropy sits above the target and grows when it falls below.
class Temperature {
 public:
  Temperature() = default;
  Temperature(double init_alpha, double target_entropy, double lr);

  double alpha() const { return std::exp(log_alpha_); }
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha(double v) { log_alpha_ = v; }
  double target_entropy() const { return target_entropy_; }
  Adam& opt() { return opt_; }
  const Adam& opt() const { return opt_; }

  // One dual step from the batch-mean log-probability of fresh samples.
  void step(double mean_logp);

 private:
  double log_alpha_ = 0.0;
  double target_entropy_ = 0.0;
  Adam opt_;
};

struct UpdateMetrics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double q_mean = 0.0;
  double entropy = 0.0;
  double alpha = 0.0;
};

struct SacConfig {
  std::size_t state_dim = 0;
  std::size_t latent_dim = 0;
  double noise_bound = 1.5;
  std::size_t hidden = 64;
  std::size_t depth = 3;
  Activation activation = Activation::Tanh;
  std::size_t n_critics = 2;
  CriticAgg agg = CriticAgg::Min;
  double lr = 3e-4;
  double tau = 0.005;
  double gamma = 0.99;  // per agent step; chunked wrappers pass gamma^chunk
  double target_entropy = 0.0;
  double init_alpha = 0.1;
  double alpha_lr = 3e-4;
};

// Soft actor-critic running directly on latent noise: the critic scores
// (state, latent) pairs and the squashed actor keeps every sampled latent
// inside the noise box.
class SacAgent {
 public:
  SacAgent(SacConfig cfg, Rng& rng);

  const SacConfig& config() const { return cfg_; }
  SquashedActor& actor() { return actor_; }
  CriticEnsemble& critics() { return critics_; }
  Temperature& temperature() { return temp_; }

  void act(std::span<const double> state, Rng& rng,
           std::span<double> w) const {
    actor_.act(state, rng, w);
  }
  void act_mean(std::span<const double> state, std::span<double> w) const {
    actor_.act_mean(state, w);
  }

  // One critic step, one actor step, one temperature step, one Polyak step.
  // The batch's `w` field is the action.
  UpdateMetrics update(const Batch& batch, Rng& rng);

  void save(const std::string& path) const;
  static SacAgent load(const std::string& path);

 private:
  SacConfig cfg_;
  SquashedActor actor_;
  CriticEnsemble critics_;
  Temperature temp_;
};

struct NaConfig {
  std::size_t state_dim = 0;
  std::size_t latent_dim = 0;  // also the width of a decoded action chunk
  double noise_bound = 1.5;
  std::size_t hidden = 64;
  std::size_t depth = 3;
  Activation activation = Activation::Tanh;
  std::size_t n_qa = 2;
  std::size_t n_qw = 2;
  CriticAgg agg = CriticAgg::Min;
  double lr = 3e-4;
  double tau = 0.005;
  double gamma = 0.99;
  double target_entropy = 0.0;
  double init_alpha = 0.1;
  double alpha_lr = 3e-4;
};

// Noise-aliased agent: an action-space critic learned by TD, distilled into
// a latent-space critic through the frozen generative policy, and an actor
// ascending the distilled critic. The action critic only ever sees dataset
// actions and policy-decoded actions, never arbitrary ones.
class NaAgent {
 public:
  NaAgent(NaConfig cfg, Rng& rng);

  const NaConfig& config() const { return cfg_; }
  SquashedActor& actor() { return actor_; }
  CriticEnsemble& qa() { return qa_; }
  CriticEnsemble& qw() { return qw_; }
  Temperature& temperature() { return temp_; }

  void act(std::span<const double> state, Rng& rng,
           std::span<double> w) const {
    actor_.act(state, rng, w);
  }
  void act_mean(std::span<const double> state, std::span<double> w) const {
    actor_.act_mean(state, w);
  }

  // TD step on the action critic; bootstrap actions come from decoding the
  // current actor's latent at the next state. Includes the Polyak step.
  double qa_update(const Batch& batch, const PolicyMap& policy, Rng& rng);

  // Regress the latent critic onto the frozen action critic composed with
  // the policy map, at box-clipped standard-normal latent draws.
  double qw_distill(const Tensor& states, const PolicyMap& policy, Rng& rng);

  // One ascent step on the latent critic plus the temperature step.
  UpdateMetrics actor_update(const Tensor& states, Rng& rng);

  void save(const std::string& path) const;
  static NaAgent load(const std::string& path);

 private:
  NaConfig cfg_;
  SquashedActor actor_;
  CriticEnsemble qa_;
  CriticEnsemble qw_;
  Temperature temp_;
};

}  // namespace steer
