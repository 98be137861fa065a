#include "steer/actor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steer {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)
constexpr double kLog2 = 0.69314718055994530942;

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

// log(1 - tanh(x)^2), stable for large |x|.
double log_sech2(double x) { return 2.0 * (kLog2 - x - softplus(-2.0 * x)); }

MlpConfig head_config(const ActorConfig& cfg) {
  MlpConfig m;
  m.widths.push_back(cfg.state_dim);
  for (std::size_t i = 0; i < cfg.depth; ++i) m.widths.push_back(cfg.hidden);
  m.widths.push_back(2 * cfg.latent_dim);  // [mu | log-std]
  m.activation = cfg.activation;
  return m;
}

}  // namespace

SquashedActor::SquashedActor(ActorConfig cfg, Rng& rng)
    : cfg_(cfg),
      net_(head_config(cfg), rng),
      opt_(net_.param_count(), {cfg.lr, 0.9, 0.999, 1e-8}) {
  if (cfg.state_dim == 0 || cfg.latent_dim == 0)
    throw std::invalid_argument("SquashedActor: zero dimension");
  if (cfg.bound <= 0.0)
    throw std::invalid_argument("SquashedActor: bound must be positive");
}

void SquashedActor::sample_batch(const Tensor& states, Rng& rng,
                                 ActorSample& out) const {
  if (states.cols() != cfg_.state_dim)
    throw std::invalid_argument("SquashedActor: state dim mismatch");
  const std::size_t B = states.rows(), D = cfg_.latent_dim;
  net_.forward(states, out.head, out.cache);
  out.mu.resize(B, D);
  out.logstd.resize(B, D);
  out.xi.resize(B, D);
  out.pre.resize(B, D);
  out.w.resize(B, D);
  out.logp.assign(B, 0.0);
  rng.normal_fill(out.xi.data);

  for (std::size_t r = 0; r < B; ++r) {
    double lp = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      const double mu = out.head(r, i);
      const double ls =
          std::clamp(out.head(r, D + i), kLogStdMin, kLogStdMax);
      const double sigma = std::exp(ls);
      const double pre = mu + sigma * out.xi(r, i);
      out.mu(r, i) = mu;
      out.logstd(r, i) = ls;
      out.pre(r, i) = pre;
      out.w(r, i) = cfg_.bound * std::tanh(pre);
      lp += -0.5 * out.xi(r, i) * out.xi(r, i) - ls - kHalfLog2Pi -
            std::log(cfg_.bound) - log_sech2(pre);
    }
    out.logp[r] = lp;
  }
  double total = 0.0;
  for (double lp : out.logp) total += lp;
  out.mean_logp = total / static_cast<double>(B);
}

void SquashedActor::mean_batch(const Tensor& states, Tensor& w) const {
  Tensor head;
  net_.forward(states, head);
  const std::size_t B = states.rows(), D = cfg_.latent_dim;
  w.resize(B, D);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t i = 0; i < D; ++i)
      w(r, i) = cfg_.bound * std::tanh(head(r, i));
}

void SquashedActor::act(std::span<const double> state, Rng& rng,
                        std::span<double> w) const {
  Tensor s(1, cfg_.state_dim);
  std::copy(state.begin(), state.end(), s.data.begin());
  ActorSample tmp;
  sample_batch(s, rng, tmp);
  std::copy(tmp.w.data.begin(), tmp.w.data.end(), w.begin());
}

void SquashedActor::act_mean(std::span<const double> state,
                             std::span<double> w) const {
  const std::vector<double> head = net_.forward1(state);
  for (std::size_t i = 0; i < cfg_.latent_dim; ++i)
    w[i] = cfg_.bound * std::tanh(head[i]);
}

void SquashedActor::grads(const ActorSample& s, const Tensor& dl_dw,
                          std::span<const double> dl_dlogp,
                          std::vector<double>& param_grads) const {
  const std::size_t B = s.w.rows(), D = cfg_.latent_dim;
  if (dl_dw.rows() != B || dl_dw.cols() != D || dl_dlogp.size() != B)
    throw std::invalid_argument("SquashedActor::grads: shape mismatch");

  Tensor dhead(B, 2 * D, 0.0);
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t i = 0; i < D; ++i) {
      const double t = std::tanh(s.pre(r, i));
      const double sigma = std::exp(s.logstd(r, i));
      // d pre picks up the squash path and the Jacobian term of logp.
      const double dpre =
          dl_dw(r, i) * cfg_.bound * (1.0 - t * t) + dl_dlogp[r] * 2.0 * t;
      dhead(r, i) = dpre;
      // log-std sees pre through sigma*xi plus the -log sigma density term;
      // the clamp passes no gradient where it is pinned.
      const double raw = s.head(r, D + i);
      if (raw > kLogStdMin && raw < kLogStdMax)
        dhead(r, D + i) = dpre * sigma * s.xi(r, i) - dl_dlogp[r];
    }
  }
  net_.backward(s.cache, dhead, param_grads);
}

}  // namespace steer
