#include "steer/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steer {

namespace {

const std::string kPointMassId = "pointmass";
const std::string kBanditId = "bandit";

double dist2(std::span<const double> p, double cx, double cy) {
  const double dx = p[0] - cx, dy = p[1] - cy;
  return dx * dx + dy * dy;
}

}  // namespace

const std::string& PointMassEnv::id() const { return kPointMassId; }

bool PointMassEnv::in_right_goal(std::span<const double> pos) {
  return dist2(pos, kGoalX, 0.0) <= kGoalRadius * kGoalRadius;
}

bool PointMassEnv::in_left_goal(std::span<const double> pos) {
  return dist2(pos, -kGoalX, 0.0) <= kGoalRadius * kGoalRadius;
}

void PointMassEnv::reset(Rng& rng, std::span<double> state) {
  pos_[0] = rng.uniform(-kStartJitter, kStartJitter);
  pos_[1] = rng.uniform(-kStartJitter, kStartJitter);
  t_ = 0;
  done_ = false;
  state[0] = pos_[0];
  state[1] = pos_[1];
}

void PointMassEnv::reset_to(std::span<const double> pos) {
  pos_[0] = pos[0];
  pos_[1] = pos[1];
  t_ = 0;
  done_ = false;
}

StepResult PointMassEnv::step(std::span<const double> action,
                              std::span<double> next_state) {
  if (done_) throw std::logic_error("PointMassEnv: step after done");
  for (std::size_t i = 0; i < 2; ++i) {
    const double a = std::clamp(action[i], -kActionBound, kActionBound);
    pos_[i] = std::clamp(pos_[i] + a, -1.0, 1.0);
  }
  ++t_;
  StepResult res;
  const bool right = in_right_goal(pos_);
  const bool left = in_left_goal(pos_);
  res.done = right || left || t_ >= kHorizon;
  res.reward = res.done && right ? 1.0 : 0.0;
  done_ = res.done;
  next_state[0] = pos_[0];
  next_state[1] = pos_[1];
  return res;
}

std::unique_ptr<Env> PointMassEnv::clone() const {
  return std::make_unique<PointMassEnv>(*this);
}

ChainMdp::ChainMdp(std::size_t n) : n_(n), id_("chain" + std::to_string(n)) {
  if (n < 2) throw std::invalid_argument("ChainMdp: need at least 3 states");
}

int ChainMdp::effect_of(double action) {
  if (action < -kThreshold) return -1;
  if (action > kThreshold) return 1;
  return 0;
}

ChainMdp::Outcome ChainMdp::lookup(std::size_t state, int effect) const {
  Outcome o;
  const long moved = static_cast<long>(state) + effect;
  o.next = static_cast<std::size_t>(
      std::clamp<long>(moved, 0, static_cast<long>(n_)));
  o.terminal = o.next == 0 || o.next == n_;
  o.reward = o.next == n_ ? 1.0 : 0.0;
  return o;
}

void ChainMdp::write_onehot(std::span<double> state) const {
  std::fill(state.begin(), state.end(), 0.0);
  state[s_] = 1.0;
}

void ChainMdp::reset(Rng& rng, std::span<double> state) {
  (void)rng;  // start state is fixed; the env is deliberately deterministic
  s_ = start_state();
  t_ = 0;
  done_ = false;
  write_onehot(state);
}

void ChainMdp::reset_to(std::size_t state) {
  if (state > n_) throw std::invalid_argument("ChainMdp: state out of range");
  s_ = state;
  t_ = 0;
  done_ = false;
}

StepResult ChainMdp::step(std::span<const double> action,
                          std::span<double> next_state) {
  if (done_) throw std::logic_error("ChainMdp: step after done");
  const Outcome o = lookup(s_, effect_of(action[0]));
  s_ = o.next;
  ++t_;
  StepResult res;
  res.done = o.terminal || t_ >= horizon();
  res.reward = o.reward;
  done_ = res.done;
  write_onehot(next_state);
  return res;
}

std::unique_ptr<Env> ChainMdp::clone() const {
  return std::make_unique<ChainMdp>(*this);
}

const std::string& GoalBandit::id() const { return kBanditId; }

void GoalBandit::reset(Rng& rng, std::span<double> state) {
  (void)rng;
  done_ = false;
  state[0] = 0.0;
}

StepResult GoalBandit::step(std::span<const double> action,
                            std::span<double> next_state) {
  if (done_) throw std::logic_error("GoalBandit: step after done");
  double d2 = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    const double diff = a - kTarget[i];
    d2 += diff * diff;
  }
  done_ = true;
  next_state[0] = 0.0;
  return {-d2, true};
}

std::unique_ptr<Env> GoalBandit::clone() const {
  return std::make_unique<GoalBandit>(*this);
}

std::unique_ptr<Env> make_env(const std::string& id) {
  if (id == kPointMassId) return std::make_unique<PointMassEnv>();
  if (id == kBanditId) return std::make_unique<GoalBandit>();
  if (id.rfind("chain", 0) == 0) {
    const std::string num = id.substr(5);
    if (!num.empty() &&
        std::all_of(num.begin(), num.end(), [](char c) { return std::isdigit(c); }))
      return std::make_unique<ChainMdp>(std::stoul(num));
  }
  throw std::invalid_argument("make_env: unknown environment '" + id + "'");
}

}  // namespace steer
