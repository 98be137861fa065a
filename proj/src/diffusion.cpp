#include "steer/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "steer/checkpoint.hpp"
#include "steer/embed.hpp"

namespace steer {

namespace {

std::vector<std::size_t> net_widths(const PolicyShape& shape,
                                    std::size_t hidden, std::size_t depth) {
  const std::size_t ld = shape.chunk * shape.action_dim;
  std::vector<std::size_t> w;
  w.push_back(shape.state_dim + ld + kTimeEmbedDim);
  for (std::size_t i = 0; i < depth; ++i) w.push_back(hidden);
  w.push_back(ld);
  return w;
}

void check_shape(const PolicyShape& s) {
  if (s.state_dim == 0 || s.action_dim == 0 || s.chunk == 0)
    throw std::invalid_argument("policy: zero dimension in shape");
  if (!(s.action_bound > 0.0))
    throw std::invalid_argument("policy: action bound must be positive");
}

// Pack [state | x | time-embedding(t01)] rows. t01 may vary per row.
void build_input(const Tensor& states, const Tensor& x,
                 std::span<const double> t01, Tensor& in) {
  const std::size_t B = states.rows();
  const std::size_t sd = states.cols();
  const std::size_t ld = x.cols();
  in.resize(B, sd + ld + kTimeEmbedDim);
  for (std::size_t r = 0; r < B; ++r) {
    double* row = in.row(r);
    const double* srow = states.row(r);
    std::copy(srow, srow + sd, row);
    const double* xrow = x.row(r);
    std::copy(xrow, xrow + ld, row + sd);
    embed_time(t01[r], {row + sd + ld, kTimeEmbedDim});
  }
}

void clamp_scale(const Tensor& x, double bound, Tensor& actions) {
  actions.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.data.size(); ++i)
    actions.data[i] = std::clamp(x.data[i], -1.0, 1.0) * bound;
}

double mse_loss_and_upstream(const Tensor& pred, const Tensor& target,
                             Tensor& dy) {
  const double B = static_cast<double>(pred.rows());
  dy.resize(pred.rows(), pred.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double diff = pred.data[i] - target.data[i];
    loss += diff * diff;
    dy.data[i] = 2.0 * diff / B;
  }
  return loss / B;
}

}  // namespace

DiffusionPolicy::DiffusionPolicy(DiffusionConfig cfg, Rng& rng)
    : cfg_(cfg),
      sched_(make_schedule(cfg.train_steps, cfg.beta_min, cfg.beta_max)),
      net_({net_widths(cfg.shape, cfg.hidden, cfg.depth), cfg.activation,
            true},
           rng),
      opt_(net_.param_count(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}) {
  check_shape(cfg_.shape);
  const std::size_t T = cfg_.train_steps;
  const std::size_t K = cfg_.infer_steps;
  if (K < 1 || K > T)
    throw std::invalid_argument("diffusion: need 1 <= infer_steps <= T");
  for (std::size_t j = 0; j < K; ++j) levels_.push_back(T - j * T / K);
}

double DiffusionPolicy::bc_train_step(const Tensor& states,
                                      const Tensor& actions, Rng& rng) {
  const std::size_t B = states.rows();
  const std::size_t ld = latent_dim();
  if (B == 0) throw std::invalid_argument("bc_train_step: empty batch");
  if (actions.rows() != B || actions.cols() != ld ||
      states.cols() != cfg_.shape.state_dim)
    throw std::invalid_argument("bc_train_step: batch shape mismatch");

  Tensor eps(B, ld), xt(B, ld);
  std::vector<double> t01(B), a0(ld);
  rng.normal_fill(eps.data);
  for (std::size_t r = 0; r < B; ++r) {
    const std::size_t t = 1 + static_cast<std::size_t>(
                                  rng.integer(cfg_.train_steps));
    t01[r] = static_cast<double>(t) / static_cast<double>(cfg_.train_steps);
    for (std::size_t c = 0; c < ld; ++c)
      a0[c] = actions(r, c) / cfg_.shape.action_bound;
    forward_noise(a0, t, {eps.row(r), ld}, sched_, {xt.row(r), ld});
  }

  Tensor in, pred, dy;
  build_input(states, xt, t01, in);
  MlpCache cache;
  net_.forward(in, pred, cache);
  const double loss = mse_loss_and_upstream(pred, eps, dy);
  if (!std::isfinite(loss))
    throw std::runtime_error("bc_train_step: non-finite loss");
  std::vector<double> grads;
  net_.backward(cache, dy, grads);
  opt_.step(net_.params(), grads);
  return loss;
}

void DiffusionPolicy::reverse_chain(const Tensor& states, Tensor& x,
                                    bool full_sequence, double sigma_scale,
                                    Rng* rng) const {
  const std::size_t B = x.rows();
  const std::size_t T = cfg_.train_steps;
  std::vector<std::size_t> full;
  if (full_sequence) {
    full.resize(T);
    for (std::size_t i = 0; i < T; ++i) full[i] = T - i;
  }
  const std::vector<std::size_t>& levels = full_sequence ? full : levels_;

  Tensor in, eps;
  std::vector<double> t01(B);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::size_t t = levels[i];
    const std::size_t prev = i + 1 < levels.size() ? levels[i + 1] : 0;
    std::fill(t01.begin(), t01.end(),
              static_cast<double>(t) / static_cast<double>(T));
    build_input(states, x, t01, in);
    net_.forward(in, eps);

    const double ab_t = sched_.alpha_bar[t];
    const double ab_p = sched_.alpha_bar[prev];
    const double sig =
        full_sequence ? sigma_scale * std::sqrt(std::max(0.0, sched_.sigma2(t, prev)))
                      : 0.0;
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sig * sig));
    const double inv_sa = 1.0 / std::sqrt(ab_t);
    const double se = std::sqrt(1.0 - ab_t);
    const double sp = std::sqrt(ab_p);
    for (std::size_t k = 0; k < x.data.size(); ++k) {
      const double x0 = (x.data[k] - se * eps.data[k]) * inv_sa;
      double nxt = sp * x0 + dir * eps.data[k];
      if (sig > 0.0) nxt += sig * rng->normal();
      x.data[k] = nxt;
    }
  }
}

void DiffusionPolicy::ddim_sample(std::span<const double> state,
                                  std::span<const double> w,
                                  std::span<double> actions) const {
  const std::size_t ld = latent_dim();
  if (state.size() != cfg_.shape.state_dim || w.size() != ld ||
      actions.size() != ld)
    throw std::invalid_argument("ddim_sample: dimension mismatch");
  Tensor s(1, state.size()), x(1, ld), out;
  std::copy(state.begin(), state.end(), s.data.begin());
  std::copy(w.begin(), w.end(), x.data.begin());
  reverse_chain(s, x, false, 0.0, nullptr);
  clamp_scale(x, cfg_.shape.action_bound, out);
  std::copy(out.data.begin(), out.data.end(), actions.begin());
}

void DiffusionPolicy::ddpm_sample(std::span<const double> state, Rng& rng,
                                  std::span<double> actions,
                                  double sigma_scale) const {
  const std::size_t ld = latent_dim();
  if (state.size() != cfg_.shape.state_dim || actions.size() != ld)
    throw std::invalid_argument("ddpm_sample: dimension mismatch");
  Tensor s(1, state.size()), x(1, ld), out;
  std::copy(state.begin(), state.end(), s.data.begin());
  rng.normal_fill(x.data);
  reverse_chain(s, x, true, sigma_scale, &rng);
  clamp_scale(x, cfg_.shape.action_bound, out);
  std::copy(out.data.begin(), out.data.end(), actions.begin());
}

void DiffusionPolicy::decode(std::span<const double> state,
                             std::span<const double> latent,
                             std::span<double> actions) const {
  ddim_sample(state, latent, actions);
}

void DiffusionPolicy::decode_batch(const Tensor& states, const Tensor& latents,
                                   Tensor& actions) const {
  if (states.rows() != latents.rows() || latents.cols() != latent_dim() ||
      states.cols() != cfg_.shape.state_dim)
    throw std::invalid_argument("decode_batch: shape mismatch");
  Tensor x = latents;
  reverse_chain(states, x, false, 0.0, nullptr);
  clamp_scale(x, cfg_.shape.action_bound, actions);
}

void DiffusionPolicy::save(const std::string& path) const {
  Checkpoint ck;
  ck.put_str("kind", "ddpm");
  ck.put_i64("state_dim", static_cast<std::int64_t>(cfg_.shape.state_dim));
  ck.put_i64("action_dim", static_cast<std::int64_t>(cfg_.shape.action_dim));
  ck.put_i64("chunk", static_cast<std::int64_t>(cfg_.shape.chunk));
  ck.put_f64("action_bound", cfg_.shape.action_bound);
  ck.put_i64("train_steps", static_cast<std::int64_t>(cfg_.train_steps));
  ck.put_i64("infer_steps", static_cast<std::int64_t>(cfg_.infer_steps));
  ck.put_f64("beta_min", cfg_.beta_min);
  ck.put_f64("beta_max", cfg_.beta_max);
  ck.put_f64("lr", cfg_.lr);
  ck.put_mlp("denoiser", net_);
  ck.save(path);
}

DiffusionPolicy DiffusionPolicy::load(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.str("kind") != "ddpm")
    throw std::runtime_error("policy load: not a diffusion checkpoint");
  Mlp net = ck.mlp("denoiser");
  DiffusionConfig cfg;
  cfg.shape.state_dim = static_cast<std::size_t>(ck.i64("state_dim"));
  cfg.shape.action_dim = static_cast<std::size_t>(ck.i64("action_dim"));
  cfg.shape.chunk = static_cast<std::size_t>(ck.i64("chunk"));
  cfg.shape.action_bound = ck.f64("action_bound");
  cfg.train_steps = static_cast<std::size_t>(ck.i64("train_steps"));
  cfg.infer_steps = static_cast<std::size_t>(ck.i64("infer_steps"));
  cfg.beta_min = ck.f64("beta_min");
  cfg.beta_max = ck.f64("beta_max");
  cfg.lr = ck.f64("lr");
  cfg.activation = net.config().activation;
  cfg.hidden = net.config().widths.size() > 2 ? net.config().widths[1] : 0;
  cfg.depth = net.config().widths.size() - 2;
  Rng scratch(0);
  DiffusionPolicy p(cfg, scratch);
  std::copy(net.params().begin(), net.params().end(), p.net_.params().begin());
  return p;
}

FlowPolicy::FlowPolicy(FlowConfig cfg, Rng& rng)
    : cfg_(cfg),
      net_({net_widths(cfg.shape, cfg.hidden, cfg.depth), cfg.activation,
            true},
           rng),
      opt_(net_.param_count(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}) {
  check_shape(cfg_.shape);
  if (cfg_.euler_steps < 1)
    throw std::invalid_argument("flow: need at least one integration step");
}

double FlowPolicy::bc_train_step(const Tensor& states, const Tensor& actions,
                                 Rng& rng) {
  const std::size_t B = states.rows();
  const std::size_t ld = latent_dim();
  if (B == 0) throw std::invalid_argument("bc_train_step: empty batch");
  if (actions.rows() != B || actions.cols() != ld ||
      states.cols() != cfg_.shape.state_dim)
    throw std::invalid_argument("bc_train_step: batch shape mismatch");

  Tensor w(B, ld), xt(B, ld), target(B, ld);
  std::vector<double> t01(B);
  rng.normal_fill(w.data);
  for (std::size_t r = 0; r < B; ++r) {
    const double t = rng.uniform();
    t01[r] = t;
    for (std::size_t c = 0; c < ld; ++c) {
      const double a = actions(r, c) / cfg_.shape.action_bound;
      xt(r, c) = (1.0 - t) * w(r, c) + t * a;
      target(r, c) = a - w(r, c);
    }
  }

  Tensor in, pred, dy;
  build_input(states, xt, t01, in);
  MlpCache cache;
  net_.forward(in, pred, cache);
  const double loss = mse_loss_and_upstream(pred, target, dy);
  if (!std::isfinite(loss))
    throw std::runtime_error("bc_train_step: non-finite loss");
  std::vector<double> grads;
  net_.backward(cache, dy, grads);
  opt_.step(net_.params(), grads);
  return loss;
}

void FlowPolicy::decode(std::span<const double> state,
                        std::span<const double> latent,
                        std::span<double> actions) const {
  const std::size_t ld = latent_dim();
  if (state.size() != cfg_.shape.state_dim || latent.size() != ld ||
      actions.size() != ld)
    throw std::invalid_argument("flow decode: dimension mismatch");
  Tensor s(1, state.size()), x(1, ld), out;
  std::copy(state.begin(), state.end(), s.data.begin());
  std::copy(latent.begin(), latent.end(), x.data.begin());
  decode_batch(s, x, out);
  std::copy(out.data.begin(), out.data.end(), actions.begin());
}

void FlowPolicy::decode_batch(const Tensor& states, const Tensor& latents,
                              Tensor& actions) const {
  const std::size_t B = states.rows();
  const std::size_t ld = latent_dim();
  if (latents.rows() != B || latents.cols() != ld ||
      states.cols() != cfg_.shape.state_dim)
    throw std::invalid_argument("decode_batch: shape mismatch");
  const std::size_t K = cfg_.euler_steps;
  const double dt = 1.0 / static_cast<double>(K);
  Tensor x = latents, in, v;
  std::vector<double> t01(B);
  for (std::size_t k = 0; k < K; ++k) {
    std::fill(t01.begin(), t01.end(),
              static_cast<double>(k) / static_cast<double>(K));
    build_input(states, x, t01, in);
    net_.forward(in, v);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] += dt * v.data[i];
  }
  clamp_scale(x, cfg_.shape.action_bound, actions);
}

void FlowPolicy::save(const std::string& path) const {
  Checkpoint ck;
  ck.put_str("kind", "flow");
  ck.put_i64("state_dim", static_cast<std::int64_t>(cfg_.shape.state_dim));
  ck.put_i64("action_dim", static_cast<std::int64_t>(cfg_.shape.action_dim));
  ck.put_i64("chunk", static_cast<std::int64_t>(cfg_.shape.chunk));
  ck.put_f64("action_bound", cfg_.shape.action_bound);
  ck.put_i64("euler_steps", static_cast<std::int64_t>(cfg_.euler_steps));
  ck.put_f64("lr", cfg_.lr);
  ck.put_mlp("velocity", net_);
  ck.save(path);
}

FlowPolicy FlowPolicy::load(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.str("kind") != "flow")
    throw std::runtime_error("policy load: not a flow checkpoint");
  Mlp net = ck.mlp("velocity");
  FlowConfig cfg;
  cfg.shape.state_dim = static_cast<std::size_t>(ck.i64("state_dim"));
  cfg.shape.action_dim = static_cast<std::size_t>(ck.i64("action_dim"));
  cfg.shape.chunk = static_cast<std::size_t>(ck.i64("chunk"));
  cfg.shape.action_bound = ck.f64("action_bound");
  cfg.euler_steps = static_cast<std::size_t>(ck.i64("euler_steps"));
  cfg.lr = ck.f64("lr");
  cfg.activation = net.config().activation;
  cfg.hidden = net.config().widths.size() > 2 ? net.config().widths[1] : 0;
  cfg.depth = net.config().widths.size() - 2;
  Rng scratch(0);
  FlowPolicy p(cfg, scratch);
  std::copy(net.params().begin(), net.params().end(), p.net_.params().begin());
  return p;
}

std::unique_ptr<PolicyMap> load_policy_map(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  const std::string& kind = ck.str("kind");
  if (kind == "ddpm")
    return std::make_unique<DiffusionPolicy>(DiffusionPolicy::load(path));
  if (kind == "flow")
    return std::make_unique<FlowPolicy>(FlowPolicy::load(path));
  throw std::runtime_error("policy load: unknown kind '" + kind + "'");
}

}  // namespace steer
