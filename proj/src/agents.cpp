#include "steer/agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "steer/checkpoint.hpp"

namespace steer {
namespace {

ActorConfig actor_config(std::size_t state_dim, std::size_t latent_dim,
                         double bound, std::size_t hidden, std::size_t depth,
                         Activation act, double lr) {
  return ActorConfig{state_dim, latent_dim, bound, hidden, depth, act, lr};
}

CriticConfig critic_config(std::size_t state_dim, std::size_t input_dim,
                           std::size_t n, std::size_t hidden,
                           std::size_t depth, Activation act, CriticAgg agg,
                           double lr, double tau) {
  return CriticConfig{state_dim, input_dim, n, hidden, depth, act, agg, lr, tau};
}

void check_batch(const Batch& b, std::size_t state_dim, std::size_t act_cols,
                 bool latent) {
  const std::size_t B = b.s.rows();
  const Tensor& act = latent ? b.w : b.a;
  if (B == 0) throw std::invalid_argument("agent update: empty batch");
  if (b.s.cols() != state_dim || b.s2.cols() != state_dim ||
      b.s2.rows() != B || act.rows() != B || act.cols() != act_cols ||
      b.r.size() != B || b.done.size() != B)
    throw std::invalid_argument("agent update: batch shape mismatch");
}

void save_adam(Checkpoint& cp, const std::string& key, const Adam& opt) {
  cp.put_f64s(key + ".m1", opt.moment1());
  cp.put_f64s(key + ".m2", opt.moment2());
  cp.put_i64(key + ".t", opt.steps());
}

void load_adam(const Checkpoint& cp, const std::string& key, Adam& opt) {
  opt.moment1() = cp.f64s(key + ".m1");
  opt.moment2() = cp.f64s(key + ".m2");
  opt.set_steps(cp.i64(key + ".t"));
  if (opt.moment1().size() != opt.size() || opt.moment2().size() != opt.size())
    throw std::runtime_error("agent checkpoint: optimizer size mismatch");
}

void save_critics(Checkpoint& cp, const std::string& prefix,
                  const CriticEnsemble& c) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::string k = prefix + std::to_string(i);
    cp.put_mlp(k + ".net", c.net(i));
    cp.put_mlp(k + ".tgt", c.target(i));
    save_adam(cp, k + ".opt", c.opt(i));
  }
}

void load_critics(const Checkpoint& cp, const std::string& prefix,
                  CriticEnsemble& c) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::string k = prefix + std::to_string(i);
    c.net(i) = cp.mlp(k + ".net");
    c.target(i) = cp.mlp(k + ".tgt");
    load_adam(cp, k + ".opt", c.opt(i));
  }
}

}  // namespace

Temperature::Temperature(double init_alpha, double target_entropy, double lr)
    : log_alpha_(std::log(init_alpha)),
      target_entropy_(target_entropy),
      opt_(1, AdamConfig{lr, 0.9, 0.999, 1e-8}) {
  if (init_alpha <= 0.0)
    throw std::invalid_argument("Temperature: alpha must be positive");
}

void Temperature::step(double mean_logp) {
  // Descent on J(alpha) = -alpha * (E[log pi] + target): entropy above the
  // target shrinks alpha, entropy below grows it.
  const double grad = -alpha() * (mean_logp + target_entropy_);
  opt_.step(std::span<double>(&log_alpha_, 1),
            std::span<const double>(&grad, 1));
}

SacAgent::SacAgent(SacConfig cfg, Rng& rng)
    : cfg_(cfg),
      actor_(actor_config(cfg.state_dim, cfg.latent_dim, cfg.noise_bound,
                          cfg.hidden, cfg.depth, cfg.activation, cfg.lr),
             rng),
      critics_(critic_config(cfg.state_dim, cfg.latent_dim, cfg.n_critics,
                             cfg.hidden, cfg.depth, cfg.activation, cfg.agg,
                             cfg.lr, cfg.tau),
               rng),
      temp_(cfg.init_alpha, cfg.target_entropy, cfg.alpha_lr) {
  if (cfg.gamma <= 0.0 || cfg.gamma > 1.0)
    throw std::invalid_argument("SacAgent: gamma must be in (0, 1]");
}

UpdateMetrics SacAgent::update(const Batch& batch, Rng& rng) {
  check_batch(batch, cfg_.state_dim, cfg_.latent_dim, true);
  const std::size_t B = batch.s.rows();
  const double alpha = temp_.alpha();
  UpdateMetrics m;
  m.alpha = alpha;

  // Soft target from fresh actor samples at the next state.
  ActorSample next;
  actor_.sample_batch(batch.s2, rng, next);
  Tensor sx;
  concat_cols(batch.s2, next.w, sx);
  std::vector<double> qbar(B);
  critics_.target_values(sx, qbar);
  std::vector<double> y(B);
  for (std::size_t r = 0; r < B; ++r)
    y[r] = batch.r[r] + cfg_.gamma * (1.0 - batch.done[r]) *
                            (qbar[r] - alpha * next.logp[r]);

  concat_cols(batch.s, batch.w, sx);
  m.critic_loss = critics_.mse_step(sx, y);

  // Actor ascent on the aggregated critic with entropy regularization.
  ActorSample cur;
  actor_.sample_batch(batch.s, rng, cur);
  concat_cols(batch.s, cur.w, sx);
  Tensor dsx;
  m.q_mean = critics_.value_and_input_grad(sx, dsx);
  Tensor dl_dw(B, cfg_.latent_dim);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t i = 0; i < cfg_.latent_dim; ++i)
      dl_dw(r, i) = -dsx(r, cfg_.state_dim + i);
  std::vector<double> dl_dlogp(B, alpha / static_cast<double>(B));
  std::vector<double> grads;
  actor_.grads(cur, dl_dw, dl_dlogp, grads);
  actor_.step(grads);
  m.actor_loss = alpha * cur.mean_logp - m.q_mean;
  m.entropy = -cur.mean_logp;

  temp_.step(cur.mean_logp);
  critics_.polyak();
  return m;
}

void SacAgent::save(const std::string& path) const {
  Checkpoint cp;
  cp.put_str("kind", "latent-sac");
  cp.put_i64("state_dim", static_cast<std::int64_t>(cfg_.state_dim));
  cp.put_i64("latent_dim", static_cast<std::int64_t>(cfg_.latent_dim));
  cp.put_f64("noise_bound", cfg_.noise_bound);
  cp.put_i64("hidden", static_cast<std::int64_t>(cfg_.hidden));
  cp.put_i64("depth", static_cast<std::int64_t>(cfg_.depth));
  cp.put_i64("activation", static_cast<std::int64_t>(cfg_.activation));
  cp.put_i64("n_critics", static_cast<std::int64_t>(cfg_.n_critics));
  cp.put_i64("agg", static_cast<std::int64_t>(cfg_.agg));
  cp.put_f64("lr", cfg_.lr);
  cp.put_f64("tau", cfg_.tau);
  cp.put_f64("gamma", cfg_.gamma);
  cp.put_f64("target_entropy", cfg_.target_entropy);
  cp.put_f64("init_alpha", cfg_.init_alpha);
  cp.put_f64("alpha_lr", cfg_.alpha_lr);
  cp.put_mlp("actor", actor_.net());
  save_adam(cp, "actor.opt", actor_.opt());
  save_critics(cp, "critic", critics_);
  cp.put_f64("log_alpha", temp_.log_alpha());
  save_adam(cp, "alpha.opt", temp_.opt());
  cp.save(path);
}

SacAgent SacAgent::load(const std::string& path) {
  const Checkpoint cp = Checkpoint::load(path);
  if (cp.str("kind") != "latent-sac")
    throw std::runtime_error("agent checkpoint: expected kind latent-sac, got " +
                             cp.str("kind"));
  SacConfig cfg;
  cfg.state_dim = static_cast<std::size_t>(cp.i64("state_dim"));
  cfg.latent_dim = static_cast<std::size_t>(cp.i64("latent_dim"));
  cfg.noise_bound = cp.f64("noise_bound");
  cfg.hidden = static_cast<std::size_t>(cp.i64("hidden"));
  cfg.depth = static_cast<std::size_t>(cp.i64("depth"));
  cfg.activation = static_cast<Activation>(cp.i64("activation"));
  cfg.n_critics = static_cast<std::size_t>(cp.i64("n_critics"));
  cfg.agg = static_cast<CriticAgg>(cp.i64("agg"));
  cfg.lr = cp.f64("lr");
  cfg.tau = cp.f64("tau");
  cfg.gamma = cp.f64("gamma");
  cfg.target_entropy = cp.f64("target_entropy");
  cfg.init_alpha = cp.f64("init_alpha");
  cfg.alpha_lr = cp.f64("alpha_lr");
  Rng scratch(0);
  SacAgent agent(cfg, scratch);
  agent.actor_.net() = cp.mlp("actor");
  load_adam(cp, "actor.opt", agent.actor_.opt());
  load_critics(cp, "critic", agent.critics_);
  agent.temp_.set_log_alpha(cp.f64("log_alpha"));
  load_adam(cp, "alpha.opt", agent.temp_.opt());
  return agent;
}

NaAgent::NaAgent(NaConfig cfg, Rng& rng)
    : cfg_(cfg),
      actor_(actor_config(cfg.state_dim, cfg.latent_dim, cfg.noise_bound,
                          cfg.hidden, cfg.depth, cfg.activation, cfg.lr),
             rng),
      qa_(critic_config(cfg.state_dim, cfg.latent_dim, cfg.n_qa, cfg.hidden,
                        cfg.depth, cfg.activation, cfg.agg, cfg.lr, cfg.tau),
          rng),
      qw_(critic_config(cfg.state_dim, cfg.latent_dim, cfg.n_qw, cfg.hidden,
                        cfg.depth, cfg.activation, cfg.agg, cfg.lr, cfg.tau),
          rng),
      temp_(cfg.init_alpha, cfg.target_entropy, cfg.alpha_lr) {
  if (cfg.gamma <= 0.0 || cfg.gamma > 1.0)
    throw std::invalid_argument("NaAgent: gamma must be in (0, 1]");
}

double NaAgent::qa_update(const Batch& batch, const PolicyMap& policy,
                          Rng& rng) {
  check_batch(batch, cfg_.state_dim, cfg_.latent_dim, false);
  if (policy.latent_dim() != cfg_.latent_dim ||
      policy.state_dim() != cfg_.state_dim)
    throw std::invalid_argument("NaAgent::qa_update: policy shape mismatch");
  const std::size_t B = batch.s.rows();
  const double alpha = temp_.alpha();

  ActorSample next;
  actor_.sample_batch(batch.s2, rng, next);
  Tensor a2;
  policy.decode_batch(batch.s2, next.w, a2);
  Tensor sx;
  concat_cols(batch.s2, a2, sx);
  std::vector<double> qbar(B);
  qa_.target_values(sx, qbar);
  std::vector<double> y(B);
  for (std::size_t r = 0; r < B; ++r)
    y[r] = batch.r[r] + cfg_.gamma * (1.0 - batch.done[r]) *
                            (qbar[r] - alpha * next.logp[r]);

  concat_cols(batch.s, batch.a, sx);
  const double loss = qa_.mse_step(sx, y);
  qa_.polyak();
  return loss;
}

double NaAgent::qw_distill(const Tensor& states, const PolicyMap& policy,
                           Rng& rng) {
  if (states.rows() == 0 || states.cols() != cfg_.state_dim)
    throw std::invalid_argument("NaAgent::qw_distill: bad states");
  const std::size_t B = states.rows();

  // Fresh prior draws, clipped onto the actor's feasible box.
  Tensor w(B, cfg_.latent_dim);
  rng.normal_fill(w.data);
  for (double& v : w.data) v = std::clamp(v, -cfg_.noise_bound, cfg_.noise_bound);

  Tensor a;
  policy.decode_batch(states, w, a);
  Tensor sa;
  concat_cols(states, a, sa);
  std::vector<double> target(B);
  qa_.values(sa, target);  // frozen: no gradient flows into the action critic

  Tensor sw;
  concat_cols(states, w, sw);
  return qw_.mse_step(sw, target);
}

UpdateMetrics NaAgent::actor_update(const Tensor& states, Rng& rng) {
  if (states.rows() == 0 || states.cols() != cfg_.state_dim)
    throw std::invalid_argument("NaAgent::actor_update: bad states");
  const std::size_t B = states.rows();
  const double alpha = temp_.alpha();
  UpdateMetrics m;
  m.alpha = alpha;

  ActorSample cur;
  actor_.sample_batch(states, rng, cur);
  Tensor sx;
  concat_cols(states, cur.w, sx);
  Tensor dsx;
  m.q_mean = qw_.value_and_input_grad(sx, dsx);
  Tensor dl_dw(B, cfg_.latent_dim);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t i = 0; i < cfg_.latent_dim; ++i)
      dl_dw(r, i) = -dsx(r, cfg_.state_dim + i);
  std::vector<double> dl_dlogp(B, alpha / static_cast<double>(B));
  std::vector<double> grads;
  actor_.grads(cur, dl_dw, dl_dlogp, grads);
  actor_.step(grads);
  m.actor_loss = alpha * cur.mean_logp - m.q_mean;
  m.entropy = -cur.mean_logp;

  temp_.step(cur.mean_logp);
  return m;
}

void NaAgent::save(const std::string& path) const {
  Checkpoint cp;
  cp.put_str("kind", "noise-aliased");
  cp.put_i64("state_dim", static_cast<std::int64_t>(cfg_.state_dim));
  cp.put_i64("latent_dim", static_cast<std::int64_t>(cfg_.latent_dim));
  cp.put_f64("noise_bound", cfg_.noise_bound);
  cp.put_i64("hidden", static_cast<std::int64_t>(cfg_.hidden));
  cp.put_i64("depth", static_cast<std::int64_t>(cfg_.depth));
  cp.put_i64("activation", static_cast<std::int64_t>(cfg_.activation));
  cp.put_i64("n_qa", static_cast<std::int64_t>(cfg_.n_qa));
  cp.put_i64("n_qw", static_cast<std::int64_t>(cfg_.n_qw));
  cp.put_i64("agg", static_cast<std::int64_t>(cfg_.agg));
  cp.put_f64("lr", cfg_.lr);
  cp.put_f64("tau", cfg_.tau);
  cp.put_f64("gamma", cfg_.gamma);
  cp.put_f64("target_entropy", cfg_.target_entropy);
  cp.put_f64("init_alpha", cfg_.init_alpha);
  cp.put_f64("alpha_lr", cfg_.alpha_lr);
  cp.put_mlp("actor", actor_.net());
  save_adam(cp, "actor.opt", actor_.opt());
  save_critics(cp, "qa", qa_);
  save_critics(cp, "qw", qw_);
  cp.put_f64("log_alpha", temp_.log_alpha());
  save_adam(cp, "alpha.opt", temp_.opt());
  cp.save(path);
}

NaAgent NaAgent::load(const std::string& path) {
  const Checkpoint cp = Checkpoint::load(path);
  if (cp.str("kind") != "noise-aliased")
    throw std::runtime_error(
        "agent checkpoint: expected kind noise-aliased, got " + cp.str("kind"));
  NaConfig cfg;
  cfg.state_dim = static_cast<std::size_t>(cp.i64("state_dim"));
  cfg.latent_dim = static_cast<std::size_t>(cp.i64("latent_dim"));
  cfg.noise_bound = cp.f64("noise_bound");
  cfg.hidden = static_cast<std::size_t>(cp.i64("hidden"));
  cfg.depth = static_cast<std::size_t>(cp.i64("depth"));
  cfg.activation = static_cast<Activation>(cp.i64("activation"));
  cfg.n_qa = static_cast<std::size_t>(cp.i64("n_qa"));
  cfg.n_qw = static_cast<std::size_t>(cp.i64("n_qw"));
  cfg.agg = static_cast<CriticAgg>(cp.i64("agg"));
  cfg.lr = cp.f64("lr");
  cfg.tau = cp.f64("tau");
  cfg.gamma = cp.f64("gamma");
  cfg.target_entropy = cp.f64("target_entropy");
  cfg.init_alpha = cp.f64("init_alpha");
  cfg.alpha_lr = cp.f64("alpha_lr");
  Rng scratch(0);
  NaAgent agent(cfg, scratch);
  agent.actor_.net() = cp.mlp("actor");
  load_adam(cp, "actor.opt", agent.actor_.opt());
  load_critics(cp, "qa", agent.qa_);
  load_critics(cp, "qw", agent.qw_);
  agent.temp_.set_log_alpha(cp.f64("log_alpha"));
  load_adam(cp, "alpha.opt", agent.temp_.opt());
  return agent;
}

}  // namespace steer
