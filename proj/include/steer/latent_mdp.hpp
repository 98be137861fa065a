#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "steer/env.hpp"
#include "steer/policy_map.hpp"

namespace steer {

// Componentwise clamp of a latent vector to the box [-bound, bound]^dim.
void clip_noise(std::span<const double> w, double bound, std::span<double> out);

// Tile a per-step latent across a chunk: out is `times` consecutive copies.
void noise_broadcast(std::span<const double> w_single, std::size_t times,
                     std::span<double> out);

struct LatentStepResult {
  double reward = 0.0;          // discounted sum of the sub-step rewards
  double raw_reward = 0.0;      // undiscounted sum, for success accounting
  std::size_t inner_steps = 0;  // inner env steps actually executed
  bool done = false;
};

// Wraps an environment and a frozen generative policy into an MDP whose
// actions are latent noise vectors: a step clips w to the noise box, decodes
// it into an action chunk, and executes the chunk on the inner environment.
// The policy is touched only through its (state, latent) -> actions map.
//
// Intermediate observations inside a chunk are discarded; the reward is the
// discounted sum sum_i gamma^i r_i, so returns accumulated over chunk steps
// with the per-chunk discount gamma()^chunk() reproduce the inner
// environment's raw discounted return exactly.
//
// Non-owning: the environment and policy must outlive the wrapper. One
// instance drives one episode at a time; run concurrent episodes on separate
// instances over separate inner environments (the policy itself is pure and
// may be shared).
class LatentActionMdp {
 public:
  LatentActionMdp(Env& env, const PolicyMap& policy, double noise_bound);

  std::size_t state_dim() const { return env_.state_dim(); }
  std::size_t latent_dim() const { return policy_.latent_dim(); }
  std::size_t chunk() const { return policy_.chunk(); }
  double noise_bound() const { return noise_bound_; }
  // Per-chunk-step discount, i.e. inner gamma raised to the chunk length.
  double chunk_gamma() const { return chunk_gamma_; }
  double inner_gamma() const { return env_.gamma(); }
  // Episode length cap in chunk steps (inner horizon rounded up).
  std::size_t horizon() const;

  void reset(Rng& rng, std::span<double> state);

  // Executes one latent action. `actions` receives the full decoded chunk
  // (latent_dim() values) so callers can log the action-space transition;
  // sub-steps after an inner termination are decoded but not executed.
  // Clipping is idempotent, so callers that store w should clip first and
  // pass the clipped vector.
  LatentStepResult step(std::span<const double> w, std::span<double> next_state,
                        std::span<double> actions);

 private:
  Env& env_;
  const PolicyMap& policy_;
  double noise_bound_;
  double chunk_gamma_;
  std::vector<double> clipped_;
  std::vector<double> cur_state_;
};

}  // namespace steer
