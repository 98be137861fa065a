#include "steer/latent_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steer {

void clip_noise(std::span<const double> w, double bound,
                std::span<double> out) {
  if (bound <= 0.0) throw std::invalid_argument("clip_noise: bound must be positive");
  if (out.size() != w.size())
    throw std::invalid_argument("clip_noise: size mismatch");
  for (std::size_t i = 0; i < w.size(); ++i)
    out[i] = std::clamp(w[i], -bound, bound);
}

void noise_broadcast(std::span<const double> w_single, std::size_t times,
                     std::span<double> out) {
  if (times == 0) throw std::invalid_argument("noise_broadcast: times must be >= 1");
  if (out.size() != w_single.size() * times)
    throw std::invalid_argument("noise_broadcast: size mismatch");
  for (std::size_t c = 0; c < times; ++c)
    std::copy(w_single.begin(), w_single.end(),
              out.begin() + static_cast<std::ptrdiff_t>(c * w_single.size()));
}

LatentActionMdp::LatentActionMdp(Env& env, const PolicyMap& policy,
                                 double noise_bound)
    : env_(env),
      policy_(policy),
      noise_bound_(noise_bound),
      chunk_gamma_(std::pow(env.gamma(), static_cast<double>(policy.chunk()))),
      clipped_(policy.latent_dim()),
      cur_state_(env.state_dim()) {
  if (noise_bound <= 0.0)
    throw std::invalid_argument("LatentActionMdp: noise bound must be positive");
  if (policy.state_dim() != env.state_dim())
    throw std::invalid_argument("LatentActionMdp: policy/env state dim mismatch");
  if (policy.action_dim() != env.action_dim())
    throw std::invalid_argument("LatentActionMdp: policy/env action dim mismatch");
}

std::size_t LatentActionMdp::horizon() const {
  return (env_.horizon() + chunk() - 1) / chunk();
}

void LatentActionMdp::reset(Rng& rng, std::span<double> state) {
  if (state.size() != state_dim())
    throw std::invalid_argument("LatentActionMdp::reset: state size mismatch");
  env_.reset(rng, cur_state_);
  std::copy(cur_state_.begin(), cur_state_.end(), state.begin());
}

LatentStepResult LatentActionMdp::step(std::span<const double> w,
                                       std::span<double> next_state,
                                       std::span<double> actions) {
  if (w.size() != latent_dim())
    throw std::invalid_argument("LatentActionMdp::step: latent size mismatch");
  if (actions.size() != latent_dim())
    throw std::invalid_argument("LatentActionMdp::step: actions size mismatch");
  if (next_state.size() != state_dim())
    throw std::invalid_argument("LatentActionMdp::step: state size mismatch");

  clip_noise(w, noise_bound_, clipped_);
  policy_.decode(cur_state_, clipped_, actions);

  const std::size_t d = env_.action_dim();
  LatentStepResult out;
  double discount = 1.0;
  for (std::size_t i = 0; i < chunk(); ++i) {
    const StepResult sub = env_.step(actions.subspan(i * d, d), cur_state_);
    out.reward += discount * sub.reward;
    out.raw_reward += sub.reward;
    ++out.inner_steps;
    discount *= env_.gamma();
    if (sub.done) {
      out.done = true;
      break;
    }
  }
  std::copy(cur_state_.begin(), cur_state_.end(), next_state.begin());
  return out;
}

}  // namespace steer
