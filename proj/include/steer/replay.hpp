#pragma once

#include <cstddef>
#include <mutex>
#include <span>
#include <vector>

#include "steer/dataset.hpp"
#include "steer/rng.hpp"
#include "steer/tensor.hpp"

namespace steer {

// One uniformly sampled minibatch. `w` is filled only when the buffer stores
// latent actions.
struct Batch {
  Tensor s, a, w, s2;
  std::vector<double> r, done;
};

// Bounded ring of transitions with uniform sampling. Stores action-space
// actions always and latent actions optionally (latent_dim 0 disables them).
// Append and sample are serialized by a mutex, so collectors may append
// while a learner samples; determinism then rests on using it from one
// thread at a time.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim,
               std::size_t action_dim, std::size_t latent_dim = 0);

  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t latent_dim() const { return latent_dim_; }
  bool stores_latent() const { return latent_dim_ > 0; }
  std::size_t size() const;

  // w must be supplied exactly when the buffer stores latents.
  void append(std::span<const double> s, std::span<const double> a,
              double reward, std::span<const double> s2, bool done,
              std::span<const double> w = {});
  // Bulk-seed from a demonstration dataset (no latent labels).
  void append_dataset(const Dataset& d);

  void sample(std::size_t batch, Rng& rng, Batch& out) const;

  // Positional peek, oldest-independent (index into the ring's raw slots);
  // valid for i < size().
  double reward_at(std::size_t i) const { return rewards_[i]; }
  double done_at(std::size_t i) const { return dones_[i]; }

 private:
  std::size_t capacity_, state_dim_, action_dim_, latent_dim_;
  std::size_t head_ = 0, size_ = 0;
  std::vector<double> states_, actions_, latents_, rewards_, next_states_,
      dones_;
  mutable std::mutex mu_;
};

}  // namespace steer
