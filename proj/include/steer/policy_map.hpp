#pragma once

#include <cstddef>
#include <span>

#include "steer/tensor.hpp"

namespace steer {

// Deterministic map from (state, latent noise) to an action chunk. This is
// the only view of a pretrained generative policy the steering layer gets:
// the weights behind it are frozen and invisible, so anything implementing
// this interface — local nets or a remote process — is interchangeable.
class PolicyMap {
 public:
  virtual ~PolicyMap() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;  // per environment step
  virtual std::size_t chunk() const = 0;       // actions per decode
  // Latent width, always chunk() * action_dim().
  virtual std::size_t latent_dim() const = 0;

  // Both must be pure: bit-identical outputs for identical inputs, safe for
  // concurrent callers.
  virtual void decode(std::span<const double> state,
                      std::span<const double> latent,
                      std::span<double> actions) const = 0;
  virtual void decode_batch(const Tensor& states, const Tensor& latents,
                            Tensor& actions) const = 0;
};

}  // namespace steer
