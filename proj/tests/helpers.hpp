#pragma once

// Shared test utilities: independent oracles and gradient checking. These are
// deliberately written without reusing library internals so they can catch
// systematic errors in the implementations they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "steer/mlp.hpp"
#include "steer/rng.hpp"
#include "steer/tensor.hpp"

namespace testutil {

// Naive triple-loop matmul, the oracle for anything Eigen-backed.
inline steer::Tensor matmul_oracle(const steer::Tensor& a,
                                   const steer::Tensor& b) {
  steer::Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

// Two-pass mean/variance layer-norm oracle (population variance, eps 1e-5).
inline std::vector<double> layer_norm_oracle(const std::vector<double>& x,
                                             const std::vector<double>& gain,
                                             const std::vector<double>& bias) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = gain[i] * (x[i] - mean) / std::sqrt(var + 1e-5) + bias[i];
  return out;
}

// Scalar loss L = sum(upstream .* forward(x)) used for finite differencing.
inline double probe_loss(const steer::Mlp& net, const steer::Tensor& x,
                         const steer::Tensor& upstream) {
  steer::Tensor y;
  net.forward(x, y);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i)
    loss += upstream.data[i] * y.data[i];
  return loss;
}

// Max relative error between analytic and central-finite-difference gradients
// over every parameter and every input entry. Relative to the largest finite
// difference magnitude, which keeps near-zero individual entries from blowing
// up the ratio while still catching any systematic mismatch.
inline double gradcheck(steer::Mlp& net, const steer::Tensor& x,
                        const steer::Tensor& upstream, double h = 1e-5) {
  steer::MlpCache cache;
  steer::Tensor y, dx;
  net.forward(x, y, cache);
  std::vector<double> analytic;
  net.backward(cache, upstream, analytic, &dx);

  std::vector<double> fd(analytic.size());
  auto params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double save = params[i];
    params[i] = save + h;
    const double up = probe_loss(net, x, upstream);
    params[i] = save - h;
    const double dn = probe_loss(net, x, upstream);
    params[i] = save;
    fd[i] = (up - dn) / (2.0 * h);
  }
  std::vector<double> fd_in(x.data.size());
  steer::Tensor xp = x;
  for (std::size_t i = 0; i < xp.data.size(); ++i) {
    const double save = xp.data[i];
    xp.data[i] = save + h;
    const double up = probe_loss(net, xp, upstream);
    xp.data[i] = save - h;
    const double dn = probe_loss(net, xp, upstream);
    xp.data[i] = save;
    fd_in[i] = (up - dn) / (2.0 * h);
  }

  double scale = 1e-12;
  for (double v : fd) scale = std::max(scale, std::fabs(v));
  for (double v : fd_in) scale = std::max(scale, std::fabs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, std::fabs(fd[i] - analytic[i]) / scale);
  for (std::size_t i = 0; i < fd_in.size(); ++i)
    worst = std::max(worst, std::fabs(fd_in[i] - dx.data[i]) / scale);
  return worst;
}

inline steer::Tensor random_tensor(std::size_t r, std::size_t c,
                                   steer::Rng& rng, double scale = 1.0) {
  steer::Tensor t(r, c);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// Gradient-exactness sweep over every network shape class used downstream:
// denoiser/velocity style, critic style, actor trunk style, with and without
// layer norm, both activations. Returns the worst relative error seen.
inline double gradcheck_sweep(int seeds_per_class) {
  struct Class {
    steer::MlpConfig cfg;
    std::size_t batch;
  };
  const std::vector<Class> classes = {
      {{{7, 16, 16, 2}, steer::Activation::Gelu, true}, 4},   // denoiser-like
      {{{4, 16, 16, 1}, steer::Activation::Tanh, true}, 5},   // critic-like
      {{{2, 16, 16, 4}, steer::Activation::Tanh, true}, 3},   // actor-trunk-like
      {{{5, 12, 3}, steer::Activation::Gelu, false}, 4},      // no layer norm
      {{{3, 2}, steer::Activation::Tanh, false}, 6},          // pure linear
  };
  double worst = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (int s = 0; s < seeds_per_class; ++s) {
      steer::Rng rng(steer::Rng::derive(1000 + s, c));
      steer::Mlp net(classes[c].cfg, rng);
      steer::Tensor x =
          random_tensor(classes[c].batch, classes[c].cfg.widths.front(), rng);
      steer::Tensor u =
          random_tensor(classes[c].batch, classes[c].cfg.widths.back(), rng);
      worst = std::max(worst, gradcheck(net, x, u));
    }
  }
  return worst;
}

}  // namespace testutil
