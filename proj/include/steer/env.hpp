#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "steer/rng.hpp"

namespace steer {

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

// Episodic environment with box-bounded continuous actions. Instances own
// their episode state; run one instance per collector. Stepping a finished
// episode is a caller bug and throws.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual double action_bound() const = 0;
  virtual double gamma() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual const std::string& id() const = 0;
  // Undiscounted episode return at or above which an episode counts as a
  // success for evaluation purposes.
  virtual double success_return() const { return 0.5; }

  virtual void reset(Rng& rng, std::span<double> state) = 0;
  virtual StepResult step(std::span<const double> action,
                          std::span<double> next_state) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// Builds an environment from its dataset-header id: "pointmass", "bandit",
// or "chain<n>" (e.g. "chain8").
std::unique_ptr<Env> make_env(const std::string& id);

}  // namespace steer
