#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "steer/rng.hpp"

namespace steer {

// Flat structure-of-arrays transition store. Row i spans states[i*state_dim
// ..), actions[i*action_dim..), etc. Kept flat so batch assembly is a copy,
// not a gather of tiny vectors.
struct Dataset {
  std::uint32_t state_dim = 0;
  std::uint32_t action_dim = 0;
  double gamma = 0.99;
  std::string env_id;

  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<double> dones;  // 0.0 / 1.0

  std::size_t size() const { return rewards.size(); }
  void push(std::span<const double> s, std::span<const double> a, double r,
            std::span<const double> s2, bool done);
  const double* state(std::size_t i) const {
    return states.data() + i * state_dim;
  }
  const double* action(std::size_t i) const {
    return actions.data() + i * action_dim;
  }
  const double* next_state(std::size_t i) const {
    return next_states.data() + i * state_dim;
  }
};

class PointMassEnv;

// Scripted bimodal demonstrations: each episode steers toward the rewarded
// goal with probability mode_mix, otherwise toward the decoy, using a
// noise-perturbed proportional controller.
Dataset generate_demos(PointMassEnv& env, double mode_mix,
                       std::size_t n_episodes, Rng& rng);

void dataset_save(const Dataset& d, const std::string& path);
Dataset dataset_load(const std::string& path);

}  // namespace steer
