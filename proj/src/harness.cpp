#include "steer/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"
#include "steer/checkpoint.hpp"
#include "steer/latent_mdp.hpp"

namespace steer {
namespace {

using nlohmann::json;

// Distinct stream salts so no two random consumers share a sequence.
constexpr std::uint64_t kAgentSalt = 1;
constexpr std::uint64_t kLearnerSalt = 2;
constexpr std::uint64_t kEvalSalt = 3;
constexpr std::uint64_t kCollectorSalt = 100;

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "gelu") return Activation::Gelu;
  throw std::invalid_argument("config: unknown activation '" + s + "'");
}

std::string activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "gelu";
}

CriticAgg agg_from(const std::string& s) {
  if (s == "min") return CriticAgg::Min;
  if (s == "mean") return CriticAgg::Mean;
  throw std::invalid_argument("config: unknown critic_agg '" + s + "'");
}

std::string agg_name(CriticAgg a) {
  return a == CriticAgg::Min ? "min" : "mean";
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw std::invalid_argument("config: '" + key +
                                "' must be a non-negative integer");
  return v.get<std::size_t>();
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number())
    throw std::invalid_argument("config: '" + key + "' must be a number");
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string())
    throw std::invalid_argument("config: '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

RunConfig run_config_parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("config: top level must be an object");

  RunConfig cfg;
  // Mode first: pure-offline configs get the offline defaults below. A
  // malformed total_steps is caught by the per-key loop regardless.
  bool offline = true;
  if (const auto it = j.find("total_steps"); it != j.end())
    offline = !(it->is_number_integer() && it->get<long long>() > 0);
  if (offline) {
    cfg.noise_bound = 0.75;
    cfg.activation = Activation::Gelu;
    cfg.depth = 4;
    cfg.n_critics = 10;
    cfg.critic_agg = CriticAgg::Mean;
  }

  for (const auto& [key, v] : j.items()) {
    if (key == "env") cfg.env_id = get_string(v, key);
    else if (key == "algorithm") cfg.algorithm = get_string(v, key);
    else if (key == "policy") cfg.policy_path = get_string(v, key);
    else if (key == "dataset") cfg.dataset_path = get_string(v, key);
    else if (key == "out_dir") cfg.out_dir = get_string(v, key);
    else if (key == "noise_bound") cfg.noise_bound = get_real(v, key);
    else if (key == "gamma") cfg.gamma = get_real(v, key);
    else if (key == "utd") cfg.utd = get_count(v, key);
    else if (key == "qw_steps") cfg.qw_steps = get_count(v, key);
    else if (key == "batch") cfg.batch = get_count(v, key);
    else if (key == "collectors") cfg.collectors = get_count(v, key);
    else if (key == "deterministic") {
      if (!v.is_boolean())
        throw std::invalid_argument("config: 'deterministic' must be a bool");
      cfg.deterministic = v.get<bool>();
    } else if (key == "initial_steps") cfg.initial_steps = get_count(v, key);
    else if (key == "total_steps") cfg.total_steps = get_count(v, key);
    else if (key == "offline_steps") cfg.offline_steps = get_count(v, key);
    else if (key == "eval_interval") cfg.eval_interval = get_count(v, key);
    else if (key == "eval_episodes") cfg.eval_episodes = get_count(v, key);
    else if (key == "seed") {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw std::invalid_argument("config: 'seed' must be a non-negative integer");
      cfg.seed = v.get<std::uint64_t>();
    } else if (key == "buffer_capacity") cfg.buffer_capacity = get_count(v, key);
    else if (key == "hidden") cfg.hidden = get_count(v, key);
    else if (key == "depth") cfg.depth = get_count(v, key);
    else if (key == "activation") cfg.activation = activation_from(get_string(v, key));
    else if (key == "n_critics") cfg.n_critics = get_count(v, key);
    else if (key == "critic_agg") cfg.critic_agg = agg_from(get_string(v, key));
    else if (key == "lr") cfg.lr = get_real(v, key);
    else if (key == "tau") cfg.tau = get_real(v, key);
    else if (key == "target_entropy") cfg.target_entropy = get_real(v, key);
    else if (key == "init_alpha") cfg.init_alpha = get_real(v, key);
    else if (key == "alpha_lr") cfg.alpha_lr = get_real(v, key);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }

  validate_config(cfg);
  return cfg;
}

std::string run_config_print(const RunConfig& cfg) {
  json j;
  j["env"] = cfg.env_id;
  j["algorithm"] = cfg.algorithm;
  j["policy"] = cfg.policy_path;
  j["dataset"] = cfg.dataset_path;
  j["out_dir"] = cfg.out_dir;
  j["noise_bound"] = cfg.noise_bound;
  j["gamma"] = cfg.gamma;
  j["utd"] = cfg.utd;
  j["qw_steps"] = cfg.qw_steps;
  j["batch"] = cfg.batch;
  j["collectors"] = cfg.collectors;
  j["deterministic"] = cfg.deterministic;
  j["initial_steps"] = cfg.initial_steps;
  j["total_steps"] = cfg.total_steps;
  j["offline_steps"] = cfg.offline_steps;
  j["eval_interval"] = cfg.eval_interval;
  j["eval_episodes"] = cfg.eval_episodes;
  j["seed"] = cfg.seed;
  j["buffer_capacity"] = cfg.buffer_capacity;
  j["hidden"] = cfg.hidden;
  j["depth"] = cfg.depth;
  j["activation"] = activation_name(cfg.activation);
  j["n_critics"] = cfg.n_critics;
  j["critic_agg"] = agg_name(cfg.critic_agg);
  j["lr"] = cfg.lr;
  j["tau"] = cfg.tau;
  j["target_entropy"] = cfg.target_entropy;
  j["init_alpha"] = cfg.init_alpha;
  j["alpha_lr"] = cfg.alpha_lr;
  return j.dump(2);
}

void validate_config(const RunConfig& cfg) {
  if (cfg.env_id.empty())
    throw std::invalid_argument("config: 'env' is required");
  if (cfg.algorithm != "latent-sac" && cfg.algorithm != "noise-aliased")
    throw std::invalid_argument(
        "config: 'algorithm' must be \"latent-sac\" or \"noise-aliased\"");
  if (cfg.utd == 0) throw std::invalid_argument("config: utd must be >= 1");
  if (cfg.collectors == 0)
    throw std::invalid_argument("config: collectors must be >= 1");
  if (cfg.batch == 0) throw std::invalid_argument("config: batch must be >= 1");
  if (cfg.eval_episodes == 0)
    throw std::invalid_argument("config: eval_episodes must be >= 1");
  if (cfg.total_steps == 0 && cfg.offline_steps == 0)
    throw std::invalid_argument(
        "config: need a positive step budget (total_steps or offline_steps)");
  if (cfg.buffer_capacity < cfg.batch)
    throw std::invalid_argument("config: buffer_capacity must be >= batch");
  if (cfg.noise_bound <= 0.0)
    throw std::invalid_argument("config: noise_bound must be positive");
  if (cfg.gamma <= 0.0 || cfg.gamma > 1.0)
    throw std::invalid_argument("config: gamma must be in (0, 1]");
  if (cfg.hidden == 0)
    throw std::invalid_argument("config: hidden must be >= 1");
  if (cfg.n_critics == 0)
    throw std::invalid_argument("config: n_critics must be >= 1");
  if (cfg.lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
  if (cfg.tau <= 0.0 || cfg.tau >= 1.0)
    throw std::invalid_argument("config: tau must be in (0, 1)");
  if (cfg.init_alpha <= 0.0)
    throw std::invalid_argument("config: init_alpha must be positive");
  if (cfg.alpha_lr < 0.0)
    throw std::invalid_argument("config: alpha_lr must be >= 0");
}

void JsonlMetricsSink::update(const UpdateRecord& r) {
  json j{{"kind", "update"},       {"env_steps", r.env_steps},
         {"updates", r.updates},   {"critic_loss", r.critic_loss},
         {"distill_loss", r.distill_loss}, {"actor_loss", r.actor_loss},
         {"q_mean", r.q_mean},     {"entropy", r.entropy},
         {"alpha", r.alpha}};
  out_ << j.dump() << '\n';
}

void JsonlMetricsSink::episode(const EpisodeRecord& r) {
  json j{{"kind", "episode"},    {"env_steps", r.env_steps},
         {"updates", r.updates}, {"return", r.ret},
         {"length", r.length},   {"success", r.success}};
  out_ << j.dump() << '\n';
}

void JsonlMetricsSink::eval(const EvalRecord& r) {
  json j{{"kind", "eval"},
         {"env_steps", r.env_steps},
         {"updates", r.updates},
         {"success_rate", r.success_rate},
         {"mean_return", r.mean_return},
         {"mean_steps", r.mean_steps}};
  out_ << j.dump() << '\n';
  out_.flush();
}

EvalResult evaluate_policy(const SquashedActor* actor, const PolicyMap& policy,
                           const Env& env, std::size_t n_episodes,
                           double noise_bound, Rng& rng) {
  if (n_episodes == 0)
    throw std::invalid_argument("evaluate_policy: n_episodes must be >= 1");
  const std::unique_ptr<Env> e = env.clone();
  LatentActionMdp lat(*e, policy, noise_bound);
  const std::size_t S = lat.state_dim(), D = lat.latent_dim();
  if (actor && (actor->config().state_dim != S || actor->config().latent_dim != D))
    throw std::invalid_argument("evaluate_policy: actor/policy shape mismatch");

  std::vector<double> s(S), s2(S), w(D), a(D);
  double successes = 0.0, return_sum = 0.0, success_steps = 0.0;
  std::size_t n_success = 0;
  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    lat.reset(rng, s);
    double ret = 0.0;
    std::size_t len = 0;
    for (std::size_t t = 0; t < lat.horizon(); ++t) {
      if (actor)
        actor->act_mean(s, w);
      else
        rng.normal_fill(w);
      const LatentStepResult r = lat.step(w, s2, a);
      ret += r.raw_reward;
      len += r.inner_steps;
      std::copy(s2.begin(), s2.end(), s.begin());
      if (r.done) break;
    }
    return_sum += ret;
    if (ret >= e->success_return()) {
      successes += 1.0;
      success_steps += static_cast<double>(len);
      ++n_success;
    }
  }
  EvalResult out;
  out.success_rate = successes / static_cast<double>(n_episodes);
  out.mean_return = return_sum / static_cast<double>(n_episodes);
  out.mean_steps = n_success > 0
                       ? success_steps / static_cast<double>(n_success)
                       : static_cast<double>(e->horizon());
  return out;
}

namespace {

// The two algorithms behind one gradient-cycle interface. The distillation
// accumulator spreads qw_steps latent-critic regressions evenly across the
// utd cycles of each collection round.
struct Learner {
  std::variant<SacAgent, NaAgent> agent;
  double qw_per_cycle = 0.0;
  double qw_acc = 0.0;

  SquashedActor& actor() {
    return std::visit([](auto& a) -> SquashedActor& { return a.actor(); },
                      agent);
  }

  UpdateRecord cycle(const Batch& b, const PolicyMap& policy, Rng& rng) {
    UpdateRecord rec;
    if (SacAgent* sac = std::get_if<SacAgent>(&agent)) {
      const UpdateMetrics m = sac->update(b, rng);
      rec.critic_loss = m.critic_loss;
      rec.actor_loss = m.actor_loss;
      rec.q_mean = m.q_mean;
      rec.entropy = m.entropy;
      rec.alpha = m.alpha;
    } else {
      NaAgent& na = std::get<NaAgent>(agent);
      rec.critic_loss = na.qa_update(b, policy, rng);
      qw_acc += qw_per_cycle;
      while (qw_acc >= 1.0) {
        rec.distill_loss = na.qw_distill(b.s, policy, rng);
        qw_acc -= 1.0;
      }
      const UpdateMetrics m = na.actor_update(b.s, rng);
      rec.actor_loss = m.actor_loss;
      rec.q_mean = m.q_mean;
      rec.entropy = m.entropy;
      rec.alpha = m.alpha;
    }
    return rec;
  }

  void save(const std::string& path) const {
    std::visit([&](const auto& a) { a.save(path); }, agent);
  }
};

Learner make_learner(const RunConfig& cfg, std::size_t state_dim,
                     std::size_t latent_dim, std::size_t chunk) {
  Rng rng(Rng::derive(cfg.seed, kAgentSalt));
  const double gamma = std::pow(cfg.gamma, static_cast<double>(chunk));
  if (cfg.algorithm == "latent-sac") {
    SacConfig sc;
    sc.state_dim = state_dim;
    sc.latent_dim = latent_dim;
    sc.noise_bound = cfg.noise_bound;
    sc.hidden = cfg.hidden;
    sc.depth = cfg.depth;
    sc.activation = cfg.activation;
    sc.n_critics = cfg.n_critics;
    sc.agg = cfg.critic_agg;
    sc.lr = cfg.lr;
    sc.tau = cfg.tau;
    sc.gamma = gamma;
    sc.target_entropy = cfg.target_entropy;
    sc.init_alpha = cfg.init_alpha;
    sc.alpha_lr = cfg.alpha_lr;
    return Learner{std::variant<SacAgent, NaAgent>(
                       std::in_place_type<SacAgent>, sc, rng),
                   0.0, 0.0};
  }
  NaConfig nc;
  nc.state_dim = state_dim;
  nc.latent_dim = latent_dim;
  nc.noise_bound = cfg.noise_bound;
  nc.hidden = cfg.hidden;
  nc.depth = cfg.depth;
  nc.activation = cfg.activation;
  nc.n_qa = cfg.n_critics;
  nc.n_qw = cfg.n_critics;
  nc.agg = cfg.critic_agg;
  nc.lr = cfg.lr;
  nc.tau = cfg.tau;
  nc.gamma = gamma;
  nc.target_entropy = cfg.target_entropy;
  nc.init_alpha = cfg.init_alpha;
  nc.alpha_lr = cfg.alpha_lr;
  return Learner{std::variant<SacAgent, NaAgent>(std::in_place_type<NaAgent>,
                                                 nc, rng),
                 static_cast<double>(cfg.qw_steps) /
                     static_cast<double>(cfg.utd),
                 0.0};
}

bool record_finite(const UpdateRecord& r) {
  return std::isfinite(r.critic_loss) && std::isfinite(r.distill_loss) &&
         std::isfinite(r.actor_loss) && std::isfinite(r.q_mean) &&
         std::isfinite(r.entropy) && std::isfinite(r.alpha);
}

json tensor_rows(const Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Silent NaN propagation is the dominant actor-critic failure mode: stop the
// run at the first non-finite loss and leave the evidence on disk.
[[noreturn]] void abort_non_finite(const RunConfig& cfg, const Learner& learner,
                                   const Batch& batch,
                                   const UpdateRecord& rec) {
  std::string where = "no dump written (out_dir unset)";
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    json dump{{"update", rec.updates},
              {"env_steps", rec.env_steps},
              {"critic_loss", rec.critic_loss},
              {"distill_loss", rec.distill_loss},
              {"actor_loss", rec.actor_loss},
              {"states", tensor_rows(batch.s)},
              {"actions", tensor_rows(batch.a)},
              {"latents", tensor_rows(batch.w)},
              {"next_states", tensor_rows(batch.s2)},
              {"rewards", batch.r},
              {"dones", batch.done}};
    std::ofstream out(cfg.out_dir + "/diverged-batch.json");
    out << dump.dump(2) << '\n';
    learner.save(cfg.out_dir + "/diverged-agent.ckpt");
    where = "batch and agent dumped in " + cfg.out_dir;
  }
  throw std::runtime_error("non-finite loss at update " +
                           std::to_string(rec.updates) + "; " + where);
}

void check_policy_env(const PolicyMap& policy, const Env& env) {
  if (policy.state_dim() != env.state_dim() ||
      policy.action_dim() != env.action_dim())
    throw std::invalid_argument(
        "run: policy checkpoint does not fit environment '" + env.id() +
        "' (state " + std::to_string(policy.state_dim()) + " vs " +
        std::to_string(env.state_dim()) + ", action " +
        std::to_string(policy.action_dim()) + " vs " +
        std::to_string(env.action_dim()) + ")");
}

// Dataset rows are one inner step wide, so consuming them requires a policy
// whose whole chunk is a single step.
void check_policy_dataset(const PolicyMap& policy, const Dataset& data) {
  if (policy.state_dim() != data.state_dim ||
      policy.action_dim() != data.action_dim)
    throw std::invalid_argument("run: policy/dataset shape mismatch");
  if (policy.latent_dim() != data.action_dim)
    throw std::invalid_argument(
        "run: per-step dataset requires a single-step policy (chunk 1)");
}

// Everything one online run owns. Collection, pacing, evaluation, and
// checkpointing are shared between the sequential and threaded modes; only
// the driver differs.
class OnlineRun {
 public:
  OnlineRun(const RunConfig& cfg, const PolicyMap& policy, const Dataset* seed,
            MetricsSink& sink, const RunHooks& hooks)
      : cfg_(cfg),
        policy_(policy),
        sink_(sink),
        env_(make_env(cfg.env_id)),
        buffer_(cfg.buffer_capacity, env_->state_dim(), policy.latent_dim(),
                cfg.algorithm == "latent-sac" ? policy.latent_dim() : 0),
        learner_(make_learner(cfg, env_->state_dim(), policy.latent_dim(),
                              policy.chunk())),
        learn_rng_(Rng::derive(cfg.seed, kLearnerSalt)) {
    check_policy_env(policy, *env_);
    if (seed != nullptr && seed->size() > 0) {
      if (cfg.algorithm != "noise-aliased")
        throw std::invalid_argument(
            "run: latent-sac cannot be seeded from an action-space dataset; "
            "use the noise-aliased algorithm");
      check_policy_dataset(policy, *seed);
      if (seed->size() > cfg.buffer_capacity)
        throw std::invalid_argument("run: dataset exceeds buffer capacity");
      buffer_.append_dataset(*seed);
      summary_.seeded_transitions = seed->size();
    }
    for (std::size_t k = 0; k < cfg.collectors; ++k) {
      cols_.push_back(Collector{
          env_->clone(), nullptr, Rng(Rng::derive(cfg.seed, kCollectorSalt + k)),
          std::vector<double>(env_->state_dim()),
          std::vector<double>(env_->state_dim()),
          std::vector<double>(policy.latent_dim()),
          std::vector<double>(policy.latent_dim()), 0.0, 0});
      Collector& c = cols_.back();
      c.lat = std::make_unique<LatentActionMdp>(*c.env, policy_,
                                                cfg.noise_bound);
      c.lat->reset(c.rng, c.s);
    }
    if (!cfg.out_dir.empty()) {
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream out(cfg.out_dir + "/config.json");
      out << run_config_print(cfg) << '\n';
    }
    if (hooks.on_agent) hooks.on_agent(learner_.agent);
  }

  RunSummary run() {
    const auto t0 = std::chrono::steady_clock::now();
    warmup();
    warmup_chunks_ = chunk_steps_.load();
    if (cfg_.eval_interval > 0) {
      next_eval_ = ((env_steps_ / cfg_.eval_interval) + 1) * cfg_.eval_interval;
      do_eval();  // pre-training anchor: the unsteered policy's level
    }
    if (cfg_.deterministic)
      run_sequential();
    else
      run_threaded();
    do_eval();
    if (!cfg_.out_dir.empty())
      learner_.save(cfg_.out_dir + "/agent-final.ckpt");
    summary_.env_steps = env_steps_.load();
    summary_.updates = updates_.load();
    summary_.episodes = episodes_.load();
    summary_.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    return summary_;
  }

 private:
  struct Collector {
    std::unique_ptr<Env> env;
    std::unique_ptr<LatentActionMdp> lat;
    Rng rng;
    std::vector<double> s, s2, w, a;
    double ep_ret;
    std::size_t ep_len;
  };

  // One latent action on collector k: prior draws during warmup, actor
  // samples afterwards. Appends the (s, a-chunk, w, r, s', done) transition
  // and emits an episode record at episode end.
  void collect_step(Collector& c, bool prior) {
    if (prior) {
      c.rng.normal_fill(c.w);
      clip_noise(c.w, cfg_.noise_bound, c.w);
    } else {
      std::lock_guard<std::mutex> g(agent_mu_);
      learner_.actor().act(c.s, c.rng, c.w);
    }
    const LatentStepResult r = c.lat->step(c.w, c.s2, c.a);
    buffer_.append(c.s, c.a, r.reward, c.s2, r.done,
                   buffer_.stores_latent() ? std::span<const double>(c.w)
                                           : std::span<const double>());
    env_steps_.fetch_add(r.inner_steps);
    chunk_steps_.fetch_add(1);
    c.ep_ret += r.raw_reward;
    c.ep_len += r.inner_steps;
    if (r.done) {
      EpisodeRecord rec;
      rec.env_steps = env_steps_.load();
      rec.updates = updates_.load();
      rec.ret = c.ep_ret;
      rec.length = c.ep_len;
      rec.success = c.ep_ret >= env_->success_return();
      {
        std::lock_guard<std::mutex> g(sink_mu_);
        sink_.episode(rec);
      }
      episodes_.fetch_add(1);
      c.ep_ret = 0.0;
      c.ep_len = 0;
      c.lat->reset(c.rng, c.s);
    } else {
      std::copy(c.s2.begin(), c.s2.end(), c.s.begin());
    }
  }

  // One gradient cycle; caller decides the pacing. Must run on the learner
  // context only.
  void one_cycle() {
    buffer_.sample(cfg_.batch, learn_rng_, batch_);
    UpdateRecord rec;
    {
      std::lock_guard<std::mutex> g(agent_mu_);
      rec = learner_.cycle(batch_, policy_, learn_rng_);
    }
    rec.env_steps = env_steps_.load();
    rec.updates = updates_.fetch_add(1) + 1;
    {
      std::lock_guard<std::mutex> g(sink_mu_);
      sink_.update(rec);
    }
    if (!record_finite(rec)) abort_non_finite(cfg_, learner_, batch_, rec);
  }

  void do_eval() {
    Rng eval_rng(Rng::derive(cfg_.seed, kEvalSalt));  // same episodes every time
    EvalResult res;
    {
      std::lock_guard<std::mutex> g(agent_mu_);
      res = evaluate_policy(&learner_.actor(), policy_, *env_,
                            cfg_.eval_episodes, cfg_.noise_bound, eval_rng);
    }
    EvalRecord rec;
    rec.env_steps = env_steps_.load();
    rec.updates = updates_.load();
    rec.success_rate = res.success_rate;
    rec.mean_return = res.mean_return;
    rec.mean_steps = res.mean_steps;
    {
      std::lock_guard<std::mutex> g(sink_mu_);
      sink_.eval(rec);
    }
    summary_.final_eval = rec;
    if (!cfg_.out_dir.empty())
      learner_.save(cfg_.out_dir + "/agent-" + std::to_string(rec.env_steps) +
                    ".ckpt");
  }

  void eval_crossings() {
    while (cfg_.eval_interval > 0 && env_steps_.load() >= next_eval_) {
      do_eval();
      next_eval_ += cfg_.eval_interval;
    }
  }

  // Phase 1: the pretrained policy driven by its own prior fills the buffer.
  void warmup() {
    const std::size_t budget = std::min(cfg_.initial_steps, cfg_.total_steps);
    while (env_steps_.load() < budget)
      for (auto& c : cols_)
        collect_step(c, true);
  }

  // One collection round (a step in every env), then utd gradient cycles.
  void run_sequential() {
    while (env_steps_.load() < cfg_.total_steps) {
      for (auto& c : cols_) collect_step(c, false);
      for (std::size_t i = 0; i < cfg_.utd; ++i)
        if (buffer_.size() >= cfg_.batch) one_cycle();
      eval_crossings();
    }
  }

  // Free-running collectors against a learner pacing itself to the same
  // update-to-data ratio: utd cycles per collectors-many chunk steps.
  void run_threaded() {
    std::atomic<bool> stop{false};
    std::exception_ptr collector_error;
    std::mutex err_mu;
    std::vector<std::thread> threads;
    threads.reserve(cols_.size());
    for (auto& c : cols_) {
      threads.emplace_back([&, &col = c]() {
        try {
          while (!stop.load()) {
            if (env_steps_.load() >= cfg_.total_steps) {
              stop.store(true);
              break;
            }
            collect_step(col, false);
          }
        } catch (...) {
          std::lock_guard<std::mutex> g(err_mu);
          if (!collector_error) collector_error = std::current_exception();
          stop.store(true);
        }
      });
    }

    // Warmup experience generates no updates, so pacing counts post-warmup
    // chunk steps only — the same ratio the sequential driver realizes.
    const auto target = [&] {
      return cfg_.utd * ((chunk_steps_.load() - warmup_chunks_) / cols_.size());
    };
    try {
      while (true) {
        const bool collectors_done = stop.load();
        if (updates_.load() < target() && buffer_.size() >= cfg_.batch) {
          one_cycle();
          eval_crossings();
        } else if (collectors_done) {
          break;
        } else {
          std::this_thread::sleep_for(std::chrono::microseconds(200));
        }
      }
    } catch (...) {
      stop.store(true);
      for (auto& t : threads) t.join();
      throw;
    }
    for (auto& t : threads) t.join();
    if (collector_error) std::rethrow_exception(collector_error);
  }

  const RunConfig& cfg_;
  const PolicyMap& policy_;
  MetricsSink& sink_;
  std::unique_ptr<Env> env_;
  ReplayBuffer buffer_;
  Learner learner_;
  Rng learn_rng_;
  std::vector<Collector> cols_;
  Batch batch_;
  RunSummary summary_;
  std::atomic<std::size_t> env_steps_{0};
  std::atomic<std::size_t> chunk_steps_{0};
  std::atomic<std::size_t> updates_{0};
  std::atomic<std::size_t> episodes_{0};
  std::size_t warmup_chunks_ = 0;
  std::size_t next_eval_ = 0;
  std::mutex agent_mu_, sink_mu_;
};

}  // namespace

RunSummary run_online(const RunConfig& cfg, const PolicyMap& policy,
                      MetricsSink& sink, const RunHooks& hooks) {
  validate_config(cfg);
  if (cfg.total_steps == 0)
    throw std::invalid_argument("run_online: total_steps must be positive");
  OnlineRun run(cfg, policy, nullptr, sink, hooks);
  return run.run();
}

RunSummary run_off2on(const RunConfig& cfg, const PolicyMap& policy,
                      const Dataset& data, MetricsSink& sink,
                      const RunHooks& hooks) {
  validate_config(cfg);
  if (cfg.total_steps == 0)
    throw std::invalid_argument("run_off2on: total_steps must be positive");
  OnlineRun run(cfg, policy, &data, sink, hooks);
  return run.run();
}

RunSummary run_offline(const RunConfig& cfg, const PolicyMap& policy,
                       const Dataset& data, MetricsSink& sink,
                       const RunHooks& hooks) {
  validate_config(cfg);
  if (cfg.total_steps != 0)
    throw std::invalid_argument(
        "run_offline: online budget set; use run_online or run_off2on");
  if (cfg.algorithm != "noise-aliased")
    throw std::invalid_argument(
        "run_offline: latent-sac trains on latent-space actions, which an "
        "action-space dataset does not carry; use noise-aliased");
  if (data.size() == 0)
    throw std::invalid_argument("run_offline: empty dataset");

  const std::unique_ptr<Env> env = make_env(cfg.env_id);
  check_policy_env(policy, *env);
  check_policy_dataset(policy, data);

  const auto t0 = std::chrono::steady_clock::now();
  ReplayBuffer buffer(data.size(), data.state_dim, data.action_dim, 0);
  buffer.append_dataset(data);
  Learner learner = make_learner(cfg, data.state_dim, policy.latent_dim(),
                                 policy.chunk());
  Rng rng(Rng::derive(cfg.seed, kLearnerSalt));

  RunSummary summary;
  summary.seeded_transitions = data.size();
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/config.json");
    out << run_config_print(cfg) << '\n';
  }
  if (hooks.on_agent) hooks.on_agent(learner.agent);

  const auto do_eval = [&](std::size_t updates) {
    Rng eval_rng(Rng::derive(cfg.seed, kEvalSalt));
    const EvalResult res =
        evaluate_policy(&learner.actor(), policy, *env, cfg.eval_episodes,
                        cfg.noise_bound, eval_rng);
    EvalRecord rec;
    rec.updates = updates;
    rec.success_rate = res.success_rate;
    rec.mean_return = res.mean_return;
    rec.mean_steps = res.mean_steps;
    sink.eval(rec);
    summary.final_eval = rec;
    if (!cfg.out_dir.empty())
      learner.save(cfg.out_dir + "/agent-" + std::to_string(updates) +
                   ".ckpt");
  };

  if (cfg.eval_interval > 0) do_eval(0);
  Batch batch;
  for (std::size_t g = 1; g <= cfg.offline_steps; ++g) {
    buffer.sample(cfg.batch, rng, batch);
    UpdateRecord rec = learner.cycle(batch, policy, rng);
    rec.updates = g;
    sink.update(rec);
    if (!record_finite(rec)) abort_non_finite(cfg, learner, batch, rec);
    if (cfg.eval_interval > 0 && g % cfg.eval_interval == 0 &&
        g != cfg.offline_steps)
      do_eval(g);
  }
  do_eval(cfg.offline_steps);
  if (!cfg.out_dir.empty()) learner.save(cfg.out_dir + "/agent-final.ckpt");

  summary.updates = cfg.offline_steps;
  summary.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return summary;
}

RunSummary run_from_config(const RunConfig& cfg, const PolicyMap& policy,
                           const Dataset* data, MetricsSink& sink,
                           const RunHooks& hooks) {
  validate_config(cfg);
  if (cfg.offline_mode() || cfg.off2on_mode()) {
    if (data == nullptr)
      throw std::invalid_argument("run_from_config: config names a dataset "
                                  "mode but no dataset was provided");
  } else if (data != nullptr) {
    throw std::invalid_argument(
        "run_from_config: dataset provided but the config names none");
  }
  if (cfg.offline_mode()) return run_offline(cfg, policy, *data, sink, hooks);
  if (cfg.off2on_mode()) return run_off2on(cfg, policy, *data, sink, hooks);
  return run_online(cfg, policy, sink, hooks);
}

std::variant<SacAgent, NaAgent> load_agent(const std::string& path) {
  const Checkpoint cp = Checkpoint::load(path);
  const std::string kind = cp.str("kind");
  if (kind == "latent-sac")
    return std::variant<SacAgent, NaAgent>(std::in_place_type<SacAgent>,
                                           SacAgent::load(path));
  if (kind == "noise-aliased")
    return std::variant<SacAgent, NaAgent>(std::in_place_type<NaAgent>,
                                           NaAgent::load(path));
  throw std::runtime_error("load_agent: '" + path +
                           "' is not an agent checkpoint (kind '" + kind +
                           "')");
}

}  // namespace steer
