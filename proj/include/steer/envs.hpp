#pragma once

#include <array>
#include <vector>

#include "steer/env.hpp"

namespace steer {

// Planar navigation with two goal discs. Episodes start near the origin and
// end on entering either disc or at the horizon; only the right disc pays.
// The left disc exists so that demonstrations can be bimodal: a behavior
// policy mixing both goals succeeds only part of the time, leaving room for
// steering to close the gap.
class PointMassEnv final : public Env {
 public:
  static constexpr double kActionBound = 0.2;
  static constexpr double kGoalX = 0.8;
  static constexpr double kGoalRadius = 0.1;
  static constexpr double kStartJitter = 0.05;
  static constexpr std::size_t kHorizon = 60;

  std::size_t state_dim() const override { return 2; }
  std::size_t action_dim() const override { return 2; }
  double action_bound() const override { return kActionBound; }
  double gamma() const override { return 0.99; }
  std::size_t horizon() const override { return kHorizon; }
  const std::string& id() const override;

  void reset(Rng& rng, std::span<double> state) override;
  StepResult step(std::span<const double> action,
                  std::span<double> next_state) override;
  std::unique_ptr<Env> clone() const override;

  // Test hook: place the agent exactly, bypassing start jitter.
  void reset_to(std::span<const double> pos);

  static bool in_right_goal(std::span<const double> pos);
  static bool in_left_goal(std::span<const double> pos);

 private:
  std::array<double, 2> pos_{0.0, 0.0};
  std::size_t t_ = 0;
  bool done_ = true;
};

// Line of states 0..n with one-hot observations and a 1-D action thresholded
// into move-left / stay / move-right. Both ends are terminal; only the right
// end pays. Everything is deterministic and enumerable, which makes it a
// brute-force value-iteration oracle for the function-approximation path.
class ChainMdp final : public Env {
 public:
  static constexpr double kThreshold = 1.0 / 3.0;

  explicit ChainMdp(std::size_t n);

  std::size_t state_dim() const override { return n_ + 1; }
  std::size_t action_dim() const override { return 1; }
  double action_bound() const override { return 1.0; }
  double gamma() const override { return 0.99; }
  std::size_t horizon() const override { return 8 * n_; }
  const std::string& id() const override { return id_; }

  void reset(Rng& rng, std::span<double> state) override;
  StepResult step(std::span<const double> action,
                  std::span<double> next_state) override;
  std::unique_ptr<Env> clone() const override;

  std::size_t n_states() const { return n_ + 1; }
  std::size_t start_state() const { return n_ / 2; }
  static int effect_of(double action);  // -1, 0, +1
  // Enumerable dynamics for oracles: (next state, reward, terminal).
  struct Outcome {
    std::size_t next;
    double reward;
    bool terminal;
  };
  Outcome lookup(std::size_t state, int effect) const;

  // Test hook: start an episode in a chosen state.
  void reset_to(std::size_t state);
  std::size_t current_state() const { return s_; }

 private:
  void write_onehot(std::span<double> state) const;

  std::size_t n_;
  std::string id_;
  std::size_t s_ = 0;
  std::size_t t_ = 0;
  bool done_ = true;
};

// Single-step quadratic bandit: reward is the negative squared distance to a
// fixed target action. Dense feedback makes it the fastest smoke test for
// the steering agents.
class GoalBandit final : public Env {
 public:
  static constexpr std::array<double, 2> kTarget{0.5, -0.3};
  static constexpr double kSuccessRadius = 0.1;

  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 2; }
  double action_bound() const override { return 1.0; }
  double gamma() const override { return 0.99; }
  std::size_t horizon() const override { return 1; }
  const std::string& id() const override;
  double success_return() const override {
    return -(kSuccessRadius * kSuccessRadius);
  }

  void reset(Rng& rng, std::span<double> state) override;
  StepResult step(std::span<const double> action,
                  std::span<double> next_state) override;
  std::unique_ptr<Env> clone() const override;

 private:
  bool done_ = true;
};

}  // namespace steer
