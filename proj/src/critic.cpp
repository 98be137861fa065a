#include "steer/critic.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace steer {
namespace {

MlpConfig member_config(const CriticConfig& cfg) {
  MlpConfig m;
  m.widths.push_back(cfg.state_dim + cfg.input_dim);
  for (std::size_t i = 0; i < cfg.depth; ++i) m.widths.push_back(cfg.hidden);
  m.widths.push_back(1);
  m.activation = cfg.activation;
  return m;
}

void forward_all(const std::vector<Mlp>& nets, const Tensor& sx,
                 std::vector<Tensor>& qs) {
  qs.resize(nets.size());
  for (std::size_t i = 0; i < nets.size(); ++i) nets[i].forward(sx, qs[i]);
}

void aggregate(CriticAgg agg, const std::vector<Tensor>& qs,
               std::span<double> out) {
  const std::size_t B = qs.front().rows();
  for (std::size_t r = 0; r < B; ++r) {
    if (agg == CriticAgg::Min) {
      double m = std::numeric_limits<double>::infinity();
      for (const Tensor& q : qs) m = std::min(m, q(r, 0));
      out[r] = m;
    } else {
      double s = 0.0;
      for (const Tensor& q : qs) s += q(r, 0);
      out[r] = s / static_cast<double>(qs.size());
    }
  }
}

}  // namespace

void concat_cols(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row mismatch");
  out.resize(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.row(r), a.cols(), out.row(r));
    std::copy_n(b.row(r), b.cols(), out.row(r) + a.cols());
  }
}

CriticEnsemble::CriticEnsemble(CriticConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.n == 0) throw std::invalid_argument("CriticEnsemble: need >= 1 member");
  if (cfg.state_dim + cfg.input_dim == 0)
    throw std::invalid_argument("CriticEnsemble: zero input width");
  if (cfg.tau <= 0.0 || cfg.tau >= 1.0)
    throw std::invalid_argument("CriticEnsemble: tau must be in (0, 1)");
  const MlpConfig m = member_config(cfg);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    nets_.emplace_back(m, rng);
    targets_.push_back(nets_.back());  // targets start as exact copies
    opts_.emplace_back(nets_.back().param_count(),
                       AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  }
}

void CriticEnsemble::values(const Tensor& sx, std::span<double> out) const {
  if (probe_) probe_(sx, "values");
  std::vector<Tensor> qs;
  forward_all(nets_, sx, qs);
  aggregate(cfg_.agg, qs, out);
}

void CriticEnsemble::target_values(const Tensor& sx,
                                   std::span<double> out) const {
  if (probe_) probe_(sx, "target_values");
  std::vector<Tensor> qs;
  forward_all(targets_, sx, qs);
  aggregate(cfg_.agg, qs, out);
}

double CriticEnsemble::mse_step(const Tensor& sx, std::span<const double> y) {
  if (y.size() != sx.rows())
    throw std::invalid_argument("CriticEnsemble::mse_step: target size mismatch");
  if (probe_) probe_(sx, "mse_step");
  const double B = static_cast<double>(sx.rows());
  double total = 0.0;
  Tensor q, dy(sx.rows(), 1);
  MlpCache cache;
  std::vector<double> grads;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    nets_[i].forward(sx, q, cache);
    double loss = 0.0;
    for (std::size_t r = 0; r < sx.rows(); ++r) {
      const double diff = q(r, 0) - y[r];
      loss += diff * diff;
      dy(r, 0) = 2.0 * diff / B;
    }
    total += loss / B;
    nets_[i].backward(cache, dy, grads);
    opts_[i].step(nets_[i].params(), grads);
  }
  return total / static_cast<double>(nets_.size());
}

double CriticEnsemble::value_and_input_grad(const Tensor& sx,
                                            Tensor& dsx) const {
  if (probe_) probe_(sx, "grad");
  const std::size_t B = sx.rows();
  const double invB = 1.0 / static_cast<double>(B);
  std::vector<Tensor> qs(nets_.size());
  std::vector<MlpCache> caches(nets_.size());
  for (std::size_t i = 0; i < nets_.size(); ++i)
    nets_[i].forward(sx, qs[i], caches[i]);

  // Which member's value each row uses; min routes the gradient to the
  // argmin member, mean splits it evenly.
  dsx.resize(B, sx.cols());
  std::fill(dsx.data.begin(), dsx.data.end(), 0.0);
  double q_mean = 0.0;
  Tensor dy(B, 1);
  std::vector<double> unused;
  Tensor dx;
  if (cfg_.agg == CriticAgg::Min) {
    std::vector<std::size_t> argmin(B, 0);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t i = 1; i < nets_.size(); ++i)
        if (qs[i](r, 0) < qs[argmin[r]](r, 0)) argmin[r] = i;
      q_mean += qs[argmin[r]](r, 0) * invB;
    }
    for (std::size_t i = 0; i < nets_.size(); ++i) {
      bool any = false;
      for (std::size_t r = 0; r < B; ++r) {
        dy(r, 0) = argmin[r] == i ? invB : 0.0;
        any |= argmin[r] == i;
      }
      if (!any) continue;
      nets_[i].backward(caches[i], dy, unused, &dx);
      for (std::size_t k = 0; k < dsx.numel(); ++k) dsx.data[k] += dx.data[k];
    }
  } else {
    const double share = invB / static_cast<double>(nets_.size());
    for (std::size_t r = 0; r < B; ++r) dy(r, 0) = share;
    for (std::size_t i = 0; i < nets_.size(); ++i) {
      for (std::size_t r = 0; r < B; ++r)
        q_mean += qs[i](r, 0) * share;
      nets_[i].backward(caches[i], dy, unused, &dx);
      for (std::size_t k = 0; k < dsx.numel(); ++k) dsx.data[k] += dx.data[k];
    }
  }
  return q_mean;
}

void CriticEnsemble::polyak() {
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    std::span<const double> online = nets_[i].params();
    std::span<double> tgt = targets_[i].params();
    for (std::size_t k = 0; k < tgt.size(); ++k)
      tgt[k] += cfg_.tau * (online[k] - tgt[k]);
  }
}

}  // namespace steer
