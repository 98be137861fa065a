#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "steer/adam.hpp"
#include "steer/mlp.hpp"
#include "steer/rng.hpp"
#include "steer/tensor.hpp"

namespace steer {

enum class CriticAgg : int { Min = 0, Mean = 1 };

struct CriticConfig {
  std::size_t state_dim = 0;
  std::size_t input_dim = 0;  // action or latent width appended to the state
  std::size_t n = 2;
  std::size_t hidden = 64;
  std::size_t depth = 3;
  Activation activation = Activation::Tanh;
  CriticAgg agg = CriticAgg::Min;
  double lr = 3e-4;
  double tau = 0.005;  // Polyak rate for the paired target ensemble
};

// Writes [a | b] rows into out.
void concat_cols(const Tensor& a, const Tensor& b, Tensor& out);

// N value networks over (state, action-or-latent) rows with a paired target
// ensemble. Aggregation is min (clipped double-Q) or mean across members;
// regression steps train every member against the same targets.
class CriticEnsemble {
 public:
  CriticEnsemble() = default;
  CriticEnsemble(CriticConfig cfg, Rng& rng);

  const CriticConfig& config() const { return cfg_; }
  std::size_t size() const { return nets_.size(); }
  Mlp& net(std::size_t i) { return nets_[i]; }
  const Mlp& net(std::size_t i) const { return nets_[i]; }
  Mlp& target(std::size_t i) { return targets_[i]; }
  const Mlp& target(std::size_t i) const { return targets_[i]; }
  Adam& opt(std::size_t i) { return opts_[i]; }
  const Adam& opt(std::size_t i) const { return opts_[i]; }

  // Optional audit hook, invoked with every input batch this ensemble scores
  // or trains on (`where` is "values", "target_values", "mse_step", or
  // "grad"). Runtime-only: not part of checkpoints.
  using Probe = std::function<void(const Tensor& sx, const char* where)>;
  void set_probe(Probe probe) { probe_ = std::move(probe); }

  // Aggregated online values for concatenated (state|input) rows.
  void values(const Tensor& sx, std::span<double> out) const;
  // Aggregated target-ensemble values.
  void target_values(const Tensor& sx, std::span<double> out) const;

  // One regression step of every member toward y; returns the mean MSE.
  double mse_step(const Tensor& sx, std::span<const double> y);

  // Mean over the batch of the aggregated online value, plus its gradient
  // with respect to the inputs (for actor ascent); parameters untouched.
  double value_and_input_grad(const Tensor& sx, Tensor& dsx) const;

  // theta_target += tau * (theta - theta_target), exact.
  void polyak();

 private:
  CriticConfig cfg_;
  std::vector<Mlp> nets_;
  std::vector<Mlp> targets_;
  std::vector<Adam> opts_;
  Probe probe_;
};

}  // namespace steer
