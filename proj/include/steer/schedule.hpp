#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace steer {

// Linear variance schedule for the forward noising process. beta[t-1] holds
// the rate for step t; alpha_bar has T+1 entries with alpha_bar[0] = 1 so a
// reverse step can land on the noise-free level.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  // Reverse-process variance for a jump from level t down to level prev.
  // Zero when prev is the clean level, matching the stochastic sampler's
  // final step.
  double sigma2(std::size_t t, std::size_t prev) const {
    const double ab_t = alpha_bar[t];
    const double ab_p = alpha_bar[prev];
    return (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p);
  }
};

// Closed-form forward noising: x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
inline void forward_noise(std::span<const double> x0, std::size_t t,
                          std::span<const double> eps, const NoiseSchedule& s,
                          std::span<double> out) {
  if (t < 1 || t > s.T)
    throw std::invalid_argument("forward_noise: step out of range");
  const double ab = s.alpha_bar[t];
  const double ca = std::sqrt(ab), ce = std::sqrt(1.0 - ab);
  for (std::size_t i = 0; i < x0.size(); ++i)
    out[i] = ca * x0[i] + ce * eps[i];
}

inline NoiseSchedule make_schedule(std::size_t T, double beta_min,
                                   double beta_max) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw std::invalid_argument(
        "make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T + 1);
  s.alpha_bar[0] = 1.0;
  double prod = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac =
        T == 1 ? 0.0
               : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    s.beta[t - 1] = beta_min + frac * (beta_max - beta_min);
    prod *= 1.0 - s.beta[t - 1];
    s.alpha_bar[t] = prod;
  }
  return s;
}

}  // namespace steer
