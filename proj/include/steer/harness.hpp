#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "steer/agents.hpp"
#include "steer/dataset.hpp"
#include "steer/env.hpp"
#include "steer/policy_map.hpp"

namespace steer {

// Full description of a steering run. Every field is a config-file key of
// the same name; run_config_parse fills mode-dependent defaults, rejects
// unknown keys, and enforces the invariants listed on validate_config.
struct RunConfig {
  std::string env_id;        // key "env"
  std::string algorithm;     // "latent-sac" | "noise-aliased"
  std::string policy_path;   // generative-policy checkpoint; loaded by the CLI
  std::string dataset_path;  // optional transition dataset; loaded by the CLI
  std::string out_dir;       // checkpoints + divergence dumps; "" disables

  double noise_bound = 1.5;  // latent box half-width (0.75 offline default)
  double gamma = 0.99;       // per inner env step; agents see gamma^chunk
  std::size_t utd = 20;      // gradient cycles per collection round
  std::size_t qw_steps = 10;  // latent-critic distillation steps per round
  std::size_t batch = 256;
  std::size_t collectors = 4;  // parallel environments
  bool deterministic = false;  // strictly sequential round-robin when true
  std::size_t initial_steps = 0;  // base-policy warmup budget, inner env steps
  std::size_t total_steps = 0;    // online budget, inner env steps
  std::size_t offline_steps = 0;  // offline budget, gradient cycles
  std::size_t eval_interval = 0;  // inner steps online / cycles offline;
                                  // 0 = final evaluation only
  std::size_t eval_episodes = 20;
  std::uint64_t seed = 0;
  std::size_t buffer_capacity = 1000000;

  std::size_t hidden = 256;
  std::size_t depth = 3;  // (4 offline default)
  Activation activation = Activation::Tanh;  // (gelu offline default)
  std::size_t n_critics = 2;                 // (10 offline default)
  CriticAgg critic_agg = CriticAgg::Min;     // (mean offline default)
  double lr = 3e-4;
  double tau = 0.005;
  double target_entropy = 0.0;
  double init_alpha = 0.1;
  double alpha_lr = 3e-4;

  // Mode trichotomy: offline = gradient budget only; off2on = online budget
  // plus a dataset to seed the buffer with; online otherwise.
  bool offline_mode() const { return total_steps == 0; }
  bool off2on_mode() const { return total_steps > 0 && !dataset_path.empty(); }
  bool online_mode() const { return total_steps > 0 && dataset_path.empty(); }
};

// Parses a JSON config text: unknown keys, wrong types, and invariant
// violations all throw std::invalid_argument. Keys left out fall back to the
// defaults above, except that pure-offline configs default noise_bound to
// 0.75, activation to gelu, depth to 4, n_critics to 10, and critic_agg to
// mean.
RunConfig run_config_parse(const std::string& text);
// Serializes every field back to a JSON object (round-trips through parse).
std::string run_config_print(const RunConfig& cfg);
// Invariants: utd/collectors/batch/eval_episodes >= 1; a positive step
// budget; buffer capacity >= batch; valid enum strings; positive rates.
void validate_config(const RunConfig& cfg);

// Metric records. Streams of these are the run's only output besides
// checkpoints; they carry both counters so online (env-step x-axis) and
// offline (gradient-step x-axis) runs share one record shape. Wall-clock
// time is deliberately kept out so that fixed-seed deterministic runs
// produce bit-identical streams.
struct UpdateRecord {
  std::size_t env_steps = 0;  // inner env steps taken so far
  std::size_t updates = 0;    // gradient cycles finished, this one included
  double critic_loss = 0.0;   // TD loss (action critic for noise-aliased)
  double distill_loss = 0.0;  // latent-critic distillation loss, 0 when none
  double actor_loss = 0.0;
  double q_mean = 0.0;
  double entropy = 0.0;
  double alpha = 0.0;
  bool operator==(const UpdateRecord&) const = default;
};

struct EpisodeRecord {
  std::size_t env_steps = 0;
  std::size_t updates = 0;
  double ret = 0.0;        // undiscounted sum of inner rewards
  std::size_t length = 0;  // inner env steps
  bool success = false;
  bool operator==(const EpisodeRecord&) const = default;
};

struct EvalRecord {
  std::size_t env_steps = 0;
  std::size_t updates = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double mean_steps = 0.0;  // mean episode length of successful episodes
  bool operator==(const EvalRecord&) const = default;
};

// Receives records as the run produces them. Runners serialize calls, so
// implementations need no locking of their own.
class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void update(const UpdateRecord&) {}
  virtual void episode(const EpisodeRecord&) {}
  virtual void eval(const EvalRecord&) {}
};

// In-memory sink for tests and summary statistics.
class MetricsLog final : public MetricsSink {
 public:
  void update(const UpdateRecord& r) override { updates.push_back(r); }
  void episode(const EpisodeRecord& r) override { episodes.push_back(r); }
  void eval(const EvalRecord& r) override { evals.push_back(r); }

  std::vector<UpdateRecord> updates;
  std::vector<EpisodeRecord> episodes;
  std::vector<EvalRecord> evals;
};

// Writes one JSON line per record, tagged {"kind": "update" | "episode" |
// "eval"}, suitable for external plotting.
class JsonlMetricsSink final : public MetricsSink {
 public:
  explicit JsonlMetricsSink(std::ostream& out) : out_(out) {}
  void update(const UpdateRecord& r) override;
  void episode(const EpisodeRecord& r) override;
  void eval(const EvalRecord& r) override;

 private:
  std::ostream& out_;
};

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;  // undiscounted
  double mean_steps = 0.0;   // over successful episodes; horizon if none
};

// Rolls n fresh episodes on a clone of env (the caller's instance and the
// agent are never mutated). With an actor, latents come from its
// deterministic mean; without one, from the N(0, I) prior — the base
// generative policy's own behavior. Success is an undiscounted return at or
// above env.success_return().
EvalResult evaluate_policy(const SquashedActor* actor, const PolicyMap& policy,
                           const Env& env, std::size_t n_episodes,
                           double noise_bound, Rng& rng);

struct RunSummary {
  std::size_t env_steps = 0;
  std::size_t updates = 0;
  std::size_t episodes = 0;
  std::size_t seeded_transitions = 0;  // buffer rows loaded before stepping
  double wall_ms = 0.0;
  EvalRecord final_eval;
};

// Observation points into a run, for instrumentation that needs more than
// the metric stream. on_agent fires once per run, after the agent is
// constructed (and, where applicable, the buffer seeded) but before any
// gradient step or environment interaction.
struct RunHooks {
  std::function<void(std::variant<SacAgent, NaAgent>&)> on_agent;
};

// Online steering. Phase 1 rolls the base policy (prior latents) until the
// buffer holds initial_steps inner steps of experience; phase 2 alternates
// collection rounds (one chunk step per collector) with utd gradient cycles
// until total_steps inner steps have been taken, evaluating and
// checkpointing every eval_interval steps. Deterministic mode runs both
// phases strictly sequentially: same seed, same stream, bit-identical
// metrics and checkpoints. Threaded mode runs collectors against a learner
// that paces itself to the same update-to-data ratio.
//
// A non-finite loss aborts the run with std::runtime_error after dumping
// the offending batch and an agent snapshot into out_dir (when set).
RunSummary run_online(const RunConfig& cfg, const PolicyMap& policy,
                      MetricsSink& sink, const RunHooks& hooks = {});

// Gradient-only steering on a frozen dataset: the buffer is the dataset.
// Noise-aliased only — the latent SAC agent trains on latent-space actions,
// which an action-space dataset does not carry. The policy's chunk width
// must equal the dataset's per-step action width (chunk 1 for the bundled
// environments). Eval cadence counts gradient cycles.
RunSummary run_offline(const RunConfig& cfg, const PolicyMap& policy,
                       const Dataset& data, MetricsSink& sink,
                       const RunHooks& hooks = {});

// run_online with the buffer pre-seeded from a dataset. An empty dataset
// reduces it to run_online exactly; a non-empty one requires the
// noise-aliased algorithm for the same reason as run_offline.
RunSummary run_off2on(const RunConfig& cfg, const PolicyMap& policy,
                      const Dataset& data, MetricsSink& sink,
                      const RunHooks& hooks = {});

// Dispatches on the config's mode. Offline and off2on modes require data.
RunSummary run_from_config(const RunConfig& cfg, const PolicyMap& policy,
                           const Dataset* data, MetricsSink& sink,
                           const RunHooks& hooks = {});

// Reads the "kind" tag of an agent checkpoint and loads the matching type.
std::variant<SacAgent, NaAgent> load_agent(const std::string& path);

}  // namespace steer
