#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "steer/adam.hpp"
#include "steer/mlp.hpp"
#include "steer/rng.hpp"
#include "steer/tensor.hpp"

namespace steer {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct ActorConfig {
  std::size_t state_dim = 0;
  std::size_t latent_dim = 0;
  double bound = 1.0;  // squashed output lives in (-bound, bound)
  std::size_t hidden = 64;
  std::size_t depth = 3;
  Activation activation = Activation::Tanh;
  double lr = 3e-4;
};

// Everything the backward pass needs about one sampled batch.
struct ActorSample {
  Tensor head;    // raw net output [mu | log-std before clamping]
  Tensor mu;      // B x D
  Tensor logstd;  // clamped
  Tensor xi;      // standard normal draws
  Tensor pre;     // mu + sigma * xi
  Tensor w;       // bound * tanh(pre)
  std::vector<double> logp;  // per row, includes squash Jacobian and bound
  MlpCache cache;
  double mean_logp = 0.0;
};

// Gaussian policy head squashed into a box: the net maps a state to a mean
// and log-std per latent dimension, samples are bound*tanh(mu + sigma*xi),
// and log-probabilities carry the tanh-Jacobian correction, so they are the
// exact density of the squashed variable. Gradients are hand-chained through
// the reparameterized sample.
class SquashedActor {
 public:
  SquashedActor() = default;
  SquashedActor(ActorConfig cfg, Rng& rng);

  const ActorConfig& config() const { return cfg_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  Adam& opt() { return opt_; }
  const Adam& opt() const { return opt_; }

  // Stochastic batch sample with cached intermediates for backward.
  void sample_batch(const Tensor& states, Rng& rng, ActorSample& out) const;
  // Deterministic batch action: bound * tanh(mu).
  void mean_batch(const Tensor& states, Tensor& w) const;

  // Single-state conveniences for rollouts.
  void act(std::span<const double> state, Rng& rng, std::span<double> w) const;
  void act_mean(std::span<const double> state, std::span<double> w) const;

  // Chain upstream dL/dw (B x D) and per-row dL/dlogp through the sample
  // into flat parameter gradients (resized and overwritten).
  void grads(const ActorSample& s, const Tensor& dl_dw,
             std::span<const double> dl_dlogp,
             std::vector<double>& param_grads) const;
  void step(std::span<const double> param_grads) {
    opt_.step(net_.params(), param_grads);
  }

 private:
  ActorConfig cfg_;
  Mlp net_;
  Adam opt_;
};

}  // namespace steer
