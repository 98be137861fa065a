#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "steer/rng.hpp"
#include "steer/tensor.hpp"

namespace steer {

enum class Activation : std::uint8_t { Tanh = 0, Gelu = 1 };

inline constexpr double kLayerNormEps = 1e-5;

// Standalone layer norm over one vector: population variance, stabilizer
// kLayerNormEps, then affine gain/bias.
void layer_norm(std::span<const double> x, std::span<const double> gain,
                std::span<const double> bias, std::span<double> out);

struct MlpConfig {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation activation = Activation::Tanh;
  bool layer_norm = true;  // applied to every hidden layer, never the output
};

// Forward activations kept for the backward pass. Value semantics; one cache
// per concurrent caller.
struct MlpCache {
  std::vector<Tensor> x;       // x[l] = input to layer l; x[L] = output
  std::vector<Tensor> lin;     // linear pre-norm output per layer
  std::vector<Tensor> xhat;    // normalized activations (layer-norm layers)
  std::vector<Tensor> act_in;  // input to the nonlinearity (hidden layers)
  std::vector<std::vector<double>> istd;  // per-row 1/sqrt(var+eps)
};

// Fully-connected net, float64, flat contiguous parameter storage. Hidden
// layers: linear -> optional layer norm -> activation. Output layer: linear.
class Mlp {
 public:
  struct LayerView {
    std::size_t in = 0, out = 0;
    std::size_t w = 0, b = 0, gain = 0, bias = 0;  // offsets into flat params
    bool ln = false;
  };

  Mlp() = default;
  Mlp(MlpConfig cfg, Rng& rng);  // fan-in-scaled uniform init

  const MlpConfig& config() const { return cfg_; }
  std::size_t in_dim() const { return cfg_.widths.front(); }
  std::size_t out_dim() const { return cfg_.widths.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  const LayerView& layer(std::size_t l) const { return layers_[l]; }

  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void forward(const Tensor& x, Tensor& y) const;
  void forward(const Tensor& x, Tensor& y, MlpCache& cache) const;
  std::vector<double> forward1(std::span<const double> x) const;

  // Gradients of a scalar loss with upstream dL/dy. param_grads is resized
  // and overwritten; pass dx to also get dL/dx.
  void backward(const MlpCache& cache, const Tensor& dy,
                std::vector<double>& param_grads, Tensor* dx = nullptr) const;

  void zero_output_layer();  // makes the net the constant-0 function of x

 private:
  MlpConfig cfg_;
  std::vector<LayerView> layers_;
  std::vector<double> params_;
};

}  // namespace steer
