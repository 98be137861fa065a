#include "steer/replay.hpp"

#include <algorithm>
#include <stdexcept>

namespace steer {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim,
                           std::size_t action_dim, std::size_t latent_dim)
    : capacity_(capacity),
      state_dim_(state_dim),
      action_dim_(action_dim),
      latent_dim_(latent_dim),
      states_(capacity * state_dim),
      actions_(capacity * action_dim),
      latents_(capacity * latent_dim),
      rewards_(capacity),
      next_states_(capacity * state_dim),
      dones_(capacity) {
  if (capacity == 0 || state_dim == 0 || action_dim == 0)
    throw std::invalid_argument("ReplayBuffer: zero capacity or dimension");
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return size_;
}

void ReplayBuffer::append(std::span<const double> s, std::span<const double> a,
                          double reward, std::span<const double> s2, bool done,
                          std::span<const double> w) {
  if (s.size() != state_dim_ || a.size() != action_dim_ ||
      s2.size() != state_dim_)
    throw std::invalid_argument("ReplayBuffer::append: dimension mismatch");
  if (w.size() != latent_dim_)
    throw std::invalid_argument(
        "ReplayBuffer::append: latent must match the configured width");
  std::lock_guard<std::mutex> lock(mu_);
  std::copy(s.begin(), s.end(), states_.begin() + head_ * state_dim_);
  std::copy(a.begin(), a.end(), actions_.begin() + head_ * action_dim_);
  if (latent_dim_ > 0)
    std::copy(w.begin(), w.end(), latents_.begin() + head_ * latent_dim_);
  rewards_[head_] = reward;
  std::copy(s2.begin(), s2.end(), next_states_.begin() + head_ * state_dim_);
  dones_[head_] = done ? 1.0 : 0.0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayBuffer::append_dataset(const Dataset& d) {
  if (d.state_dim != state_dim_ || d.action_dim != action_dim_)
    throw std::invalid_argument("ReplayBuffer::append_dataset: shape mismatch");
  if (latent_dim_ > 0)
    throw std::invalid_argument(
        "ReplayBuffer::append_dataset: dataset carries no latent labels");
  for (std::size_t i = 0; i < d.size(); ++i)
    append({d.state(i), state_dim_}, {d.action(i), action_dim_}, d.rewards[i],
           {d.next_state(i), state_dim_}, d.dones[i] != 0.0);
}

void ReplayBuffer::sample(std::size_t batch, Rng& rng, Batch& out) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (size_ == 0)
    throw std::logic_error("ReplayBuffer::sample: buffer is empty");
  if (batch == 0)
    throw std::invalid_argument("ReplayBuffer::sample: empty batch");
  out.s.resize(batch, state_dim_);
  out.a.resize(batch, action_dim_);
  out.w.resize(batch, latent_dim_ > 0 ? latent_dim_ : 0);
  out.s2.resize(batch, state_dim_);
  out.r.resize(batch);
  out.done.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = rng.integer(size_);
    std::copy_n(states_.begin() + i * state_dim_, state_dim_, out.s.row(b));
    std::copy_n(actions_.begin() + i * action_dim_, action_dim_, out.a.row(b));
    if (latent_dim_ > 0)
      std::copy_n(latents_.begin() + i * latent_dim_, latent_dim_,
                  out.w.row(b));
    std::copy_n(next_states_.begin() + i * state_dim_, state_dim_,
                out.s2.row(b));
    out.r[b] = rewards_[i];
    out.done[b] = dones_[i];
  }
}

}  // namespace steer
