#include "steer/mlp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace steer {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

}  // namespace

void layer_norm(std::span<const double> x, std::span<const double> gain,
                std::span<const double> bias, std::span<double> out) {
  const std::size_t n = x.size();
  if (gain.size() != n || bias.size() != n || out.size() != n)
    throw std::invalid_argument("layer_norm: length mismatch");
  if (n == 0) throw std::invalid_argument("layer_norm: empty input");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double istd = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = gain[i] * ((x[i] - mean) * istd) + bias[i];
}

Mlp::Mlp(MlpConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  if (cfg_.widths.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t w : cfg_.widths)
    if (w == 0) throw std::invalid_argument("Mlp: zero layer width");

  const std::size_t L = cfg_.widths.size() - 1;
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    LayerView lv;
    lv.in = cfg_.widths[l];
    lv.out = cfg_.widths[l + 1];
    lv.ln = cfg_.layer_norm && l + 1 < cfg_.widths.size() - 1;
    lv.w = off;
    off += lv.in * lv.out;
    lv.b = off;
    off += lv.out;
    if (lv.ln) {
      lv.gain = off;
      off += lv.out;
      lv.bias = off;
      off += lv.out;
    }
    layers_.push_back(lv);
  }
  params_.resize(off);

  for (const LayerView& lv : layers_) {
    const double k = 1.0 / std::sqrt(static_cast<double>(lv.in));
    for (std::size_t i = 0; i < lv.in * lv.out; ++i)
      params_[lv.w + i] = rng.uniform(-k, k);
    for (std::size_t i = 0; i < lv.out; ++i)
      params_[lv.b + i] = rng.uniform(-k, k);
    if (lv.ln) {
      for (std::size_t i = 0; i < lv.out; ++i) params_[lv.gain + i] = 1.0;
      for (std::size_t i = 0; i < lv.out; ++i) params_[lv.bias + i] = 0.0;
    }
  }
}

void Mlp::zero_output_layer() {
  const LayerView& lv = layers_.back();
  for (std::size_t i = 0; i < lv.in * lv.out; ++i) params_[lv.w + i] = 0.0;
  for (std::size_t i = 0; i < lv.out; ++i) params_[lv.b + i] = 0.0;
}

void Mlp::forward(const Tensor& x, Tensor& y, MlpCache& cache) const {
  if (x.shape.size() != 2 || x.cols() != in_dim())
    throw std::invalid_argument("Mlp::forward: input width mismatch");
  const std::size_t L = layers_.size();
  const std::size_t B = x.rows();
  cache.x.resize(L + 1);
  cache.lin.resize(L);
  cache.xhat.resize(L);
  cache.act_in.resize(L);
  cache.istd.resize(L);

  cache.x[0] = x;
  for (std::size_t l = 0; l < L; ++l) {
    const LayerView& lv = layers_[l];
    Tensor& lin = cache.lin[l];
    lin.resize(B, lv.out);
    {
      ConstMatMap xin(cache.x[l].data.data(), B, lv.in);
      ConstMatMap w(params_.data() + lv.w, lv.out, lv.in);
      ConstVecMap b(params_.data() + lv.b, lv.out);
      MatMap mo(lin.data.data(), B, lv.out);
      mo.noalias() = xin * w.transpose();
      mo.rowwise() += b.transpose();
    }
    if (l == L - 1) {
      cache.x[L] = lin;
      break;
    }

    Tensor& ai = cache.act_in[l];
    if (lv.ln) {
      Tensor& xh = cache.xhat[l];
      xh.resize(B, lv.out);
      ai.resize(B, lv.out);
      cache.istd[l].resize(B);
      const double* gain = params_.data() + lv.gain;
      const double* bias = params_.data() + lv.bias;
      const double inv_n = 1.0 / static_cast<double>(lv.out);
      for (std::size_t i = 0; i < B; ++i) {
        const double* r = lin.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < lv.out; ++j) mean += r[j];
        mean *= inv_n;
        double var = 0.0;
        for (std::size_t j = 0; j < lv.out; ++j)
          var += (r[j] - mean) * (r[j] - mean);
        var *= inv_n;
        const double istd = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.istd[l][i] = istd;
        double* xhr = xh.row(i);
        double* air = ai.row(i);
        for (std::size_t j = 0; j < lv.out; ++j) {
          xhr[j] = (r[j] - mean) * istd;
          air[j] = gain[j] * xhr[j] + bias[j];
        }
      }
    } else {
      ai = lin;
    }

    Tensor& out = cache.x[l + 1];
    out.resize(B, lv.out);
    if (cfg_.activation == Activation::Tanh) {
      for (std::size_t i = 0; i < ai.data.size(); ++i)
        out.data[i] = std::tanh(ai.data[i]);
    } else {
      for (std::size_t i = 0; i < ai.data.size(); ++i)
        out.data[i] = gelu(ai.data[i]);
    }
  }
  y = cache.x[L];
}

void Mlp::forward(const Tensor& x, Tensor& y) const {
  if (x.shape.size() != 2 || x.cols() != in_dim())
    throw std::invalid_argument("Mlp::forward: input width mismatch");
  const std::size_t L = layers_.size();
  const std::size_t B = x.rows();
  Tensor cur = x;
  Tensor nxt;
  for (std::size_t l = 0; l < L; ++l) {
    const LayerView& lv = layers_[l];
    nxt.resize(B, lv.out);
    {
      ConstMatMap xin(cur.data.data(), B, lv.in);
      ConstMatMap w(params_.data() + lv.w, lv.out, lv.in);
      ConstVecMap b(params_.data() + lv.b, lv.out);
      MatMap mo(nxt.data.data(), B, lv.out);
      mo.noalias() = xin * w.transpose();
      mo.rowwise() += b.transpose();
    }
    if (l == L - 1) {
      std::swap(cur, nxt);
      break;
    }
    if (lv.ln) {
      const double* gain = params_.data() + lv.gain;
      const double* bias = params_.data() + lv.bias;
      const double inv_n = 1.0 / static_cast<double>(lv.out);
      for (std::size_t i = 0; i < B; ++i) {
        double* r = nxt.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < lv.out; ++j) mean += r[j];
        mean *= inv_n;
        double var = 0.0;
        for (std::size_t j = 0; j < lv.out; ++j)
          var += (r[j] - mean) * (r[j] - mean);
        var *= inv_n;
        const double istd = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < lv.out; ++j)
          r[j] = gain[j] * ((r[j] - mean) * istd) + bias[j];
      }
    }
    if (cfg_.activation == Activation::Tanh) {
      for (double& v : nxt.data) v = std::tanh(v);
    } else {
      for (double& v : nxt.data) v = gelu(v);
    }
    std::swap(cur, nxt);
  }
  y = std::move(cur);
}

std::vector<double> Mlp::forward1(std::span<const double> x) const {
  Tensor in(1, x.size());
  std::copy(x.begin(), x.end(), in.data.begin());
  Tensor out;
  forward(in, out);
  return out.data;
}

void Mlp::backward(const MlpCache& cache, const Tensor& dy,
                   std::vector<double>& param_grads, Tensor* dx) const {
  const std::size_t L = layers_.size();
  if (cache.x.size() != L + 1)
    throw std::invalid_argument("Mlp::backward: cache does not match net");
  const std::size_t B = cache.x[0].rows();
  if (dy.shape.size() != 2 || dy.rows() != B || dy.cols() != out_dim())
    throw std::invalid_argument("Mlp::backward: upstream shape mismatch");

  param_grads.assign(params_.size(), 0.0);
  Tensor cur = dy;  // dL/d(layer output), walking top-down
  Tensor dlin, dprev;
  for (std::size_t li = L; li-- > 0;) {
    const LayerView& lv = layers_[li];
    if (li == L - 1) {
      dlin = cur;
    } else {
      // through the nonlinearity
      dlin.resize(B, lv.out);
      const Tensor& ai = cache.act_in[li];
      if (cfg_.activation == Activation::Tanh) {
        const Tensor& ao = cache.x[li + 1];
        for (std::size_t i = 0; i < dlin.data.size(); ++i)
          dlin.data[i] = cur.data[i] * (1.0 - ao.data[i] * ao.data[i]);
      } else {
        for (std::size_t i = 0; i < dlin.data.size(); ++i)
          dlin.data[i] = cur.data[i] * gelu_grad(ai.data[i]);
      }
      if (lv.ln) {
        // through affine + normalization
        const Tensor& xh = cache.xhat[li];
        const double* gain = params_.data() + lv.gain;
        double* ggain = param_grads.data() + lv.gain;
        double* gbias = param_grads.data() + lv.bias;
        const double inv_n = 1.0 / static_cast<double>(lv.out);
        for (std::size_t i = 0; i < B; ++i) {
          double* d = dlin.row(i);
          const double* xhr = xh.row(i);
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < lv.out; ++j) {
            const double da = d[j];
            ggain[j] += da * xhr[j];
            gbias[j] += da;
            const double dxh = da * gain[j];
            d[j] = dxh;  // reuse in place
            m1 += dxh;
            m2 += dxh * xhr[j];
          }
          m1 *= inv_n;
          m2 *= inv_n;
          const double istd = cache.istd[li][i];
          for (std::size_t j = 0; j < lv.out; ++j)
            d[j] = istd * (d[j] - m1 - xhr[j] * m2);
        }
      }
    }

    {
      ConstMatMap dl(dlin.data.data(), B, lv.out);
      ConstMatMap xin(cache.x[li].data.data(), B, lv.in);
      MatMap gw(param_grads.data() + lv.w, lv.out, lv.in);
      gw.noalias() += dl.transpose() * xin;
      VecMap gb(param_grads.data() + lv.b, lv.out);
      gb.noalias() += dl.colwise().sum().transpose();
    }
    if (li > 0 || dx != nullptr) {
      dprev.resize(B, lv.in);
      ConstMatMap dl(dlin.data.data(), B, lv.out);
      ConstMatMap w(params_.data() + lv.w, lv.out, lv.in);
      MatMap mo(dprev.data.data(), B, lv.in);
      mo.noalias() = dl * w;
      std::swap(cur, dprev);
    }
  }
  if (dx != nullptr) *dx = cur;
}

}  // namespace steer
