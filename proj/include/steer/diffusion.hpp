#pragma once

#include <memory>
#include <optional>
#include <string>

#include "steer/adam.hpp"
#include "steer/mlp.hpp"
#include "steer/policy_map.hpp"
#include "steer/rng.hpp"
#include "steer/schedule.hpp"

namespace steer {

// Shared shape/bounds description for the generative behavior-cloning
// policies. Actions live in [-action_bound, action_bound] per dimension in
// the environment; internally everything runs in the normalized [-1, 1] box.
struct PolicyShape {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;  // per environment step
  std::size_t chunk = 1;       // consecutive actions predicted jointly
  double action_bound = 1.0;
};

struct DiffusionConfig {
  PolicyShape shape;
  std::size_t hidden = 64;
  std::size_t depth = 3;  // hidden layers in the denoiser
  Activation activation = Activation::Gelu;
  std::size_t train_steps = 100;   // forward-process length T
  std::size_t infer_steps = 8;     // deterministic sampler steps K
  double beta_min = 1e-3;          // scaled so alpha_bar_T is near zero at T=100
  double beta_max = 0.2;
  double lr = 3e-4;
};

// Denoising-diffusion behavior cloning policy. Trained with noise-prediction
// regression; sampled either stochastically (full reverse chain) or
// deterministically from a caller-supplied latent, which is the map the
// steering layer drives.
class DiffusionPolicy final : public PolicyMap {
 public:
  DiffusionPolicy(DiffusionConfig cfg, Rng& rng);

  std::size_t state_dim() const override { return cfg_.shape.state_dim; }
  std::size_t action_dim() const override { return cfg_.shape.action_dim; }
  std::size_t chunk() const override { return cfg_.shape.chunk; }
  std::size_t latent_dim() const override {
    return cfg_.shape.chunk * cfg_.shape.action_dim;
  }
  const DiffusionConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const Mlp& denoiser() const { return net_; }
  Mlp& denoiser() { return net_; }

  // One noise-prediction regression step on a batch of environment-space
  // (state, action-chunk) rows. Returns the per-row-summed, batch-averaged
  // squared error.
  double bc_train_step(const Tensor& states, const Tensor& actions, Rng& rng);

  // Deterministic sampler over the inference subsequence with the supplied
  // latent as the initial noise.
  void ddim_sample(std::span<const double> state, std::span<const double> w,
                   std::span<double> actions) const;
  // Stochastic sampler over the full schedule; sigma_scale exists so tests
  // can collapse it onto the deterministic path.
  void ddpm_sample(std::span<const double> state, Rng& rng,
                   std::span<double> actions, double sigma_scale = 1.0) const;

  void decode(std::span<const double> state, std::span<const double> latent,
              std::span<double> actions) const override;
  void decode_batch(const Tensor& states, const Tensor& latents,
                    Tensor& actions) const override;

  void save(const std::string& path) const;
  static DiffusionPolicy load(const std::string& path);

 private:
  void reverse_chain(const Tensor& states, Tensor& x, bool full_sequence,
                     double sigma_scale, Rng* rng) const;

  DiffusionConfig cfg_;
  NoiseSchedule sched_;
  std::vector<std::size_t> levels_;  // inference subsequence, descending
  Mlp net_;
  Adam opt_;
};

struct FlowConfig {
  PolicyShape shape;
  std::size_t hidden = 64;
  std::size_t depth = 3;
  Activation activation = Activation::Gelu;
  std::size_t euler_steps = 10;
  double lr = 3e-4;
};

// Flow-matching behavior cloning policy: a velocity field regressed onto the
// straight-line interpolant, integrated with fixed-step Euler from the
// latent. Deterministic by construction.
class FlowPolicy final : public PolicyMap {
 public:
  FlowPolicy(FlowConfig cfg, Rng& rng);

  std::size_t state_dim() const override { return cfg_.shape.state_dim; }
  std::size_t action_dim() const override { return cfg_.shape.action_dim; }
  std::size_t chunk() const override { return cfg_.shape.chunk; }
  std::size_t latent_dim() const override {
    return cfg_.shape.chunk * cfg_.shape.action_dim;
  }
  const FlowConfig& config() const { return cfg_; }
  const Mlp& velocity() const { return net_; }
  Mlp& velocity() { return net_; }

  double bc_train_step(const Tensor& states, const Tensor& actions, Rng& rng);

  void decode(std::span<const double> state, std::span<const double> latent,
              std::span<double> actions) const override;
  void decode_batch(const Tensor& states, const Tensor& latents,
                    Tensor& actions) const override;

  void save(const std::string& path) const;
  static FlowPolicy load(const std::string& path);

 private:
  FlowConfig cfg_;
  Mlp net_;
  Adam opt_;
};

// Reads the kind tag in a policy checkpoint and reconstructs whichever
// sampler wrote it.
std::unique_ptr<PolicyMap> load_policy_map(const std::string& path);

}  // namespace steer
