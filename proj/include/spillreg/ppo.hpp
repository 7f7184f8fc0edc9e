#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spillreg/controllers.hpp"
#include "spillreg/gradnet.hpp"
#include "spillreg/rng.hpp"
#include "spillreg/spillsim.hpp"

namespace spillreg::ppo {

enum class RewardKind { kNegEma, kNegSum };

struct RewardConfig {
  RewardKind kind = RewardKind::kNegEma;
  double alpha = 0.5;

  void validate() const;
  std::string label() const;  // "-EMA (alpha=0.5)" / "-SUM"
  bool operator==(const RewardConfig&) const = default;
};

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  std::size_t epochs_per_iter = 10;
  std::size_t minibatch = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double lr = 1e-4;
  std::size_t iterations = 600;
  std::size_t seed_rotation_period = 1000;  // episodes per training seed
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8};
  std::uint64_t master_seed = 0;
  gradnet::OptimizerKind optimizer = gradnet::OptimizerKind::kAdam;

  // `buffer_len` is the episode length the minibatch must fit in.
  void validate(std::size_t buffer_len) const;
  bool operator==(const TrainConfig&) const = default;
};

struct PolicyVariant {
  controllers::PolicyKind policy = controllers::PolicyKind::kNeuralPid;
  controllers::StateVariant state = controllers::StateVariant::kPidAct;
  bool operator==(const PolicyVariant&) const = default;
};

struct Transition {
  std::vector<double> features;  // raw StateVector features
  double action = 0.0;           // pre-clamp sample
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::vector<Transition> transitions;
  std::vector<double> advantages;  // normalized after compute_gae
  std::vector<double> returns;
  spillsim::EnvState env;  // final environment state with both traces
};

// Trainable agent: the actor as a network over scaled features (a single
// identity layer for the neuralized PID), its exploration width, the critic,
// and their optimizers.
struct Agent {
  PolicyVariant variant;
  std::vector<double> feature_scale;
  gradnet::DenseNet actor;
  double log_std = controllers::kInitialLogStd;
  gradnet::DenseNet critic;
  gradnet::AdamState actor_opt;
  gradnet::AdamState log_std_opt;
  gradnet::AdamState critic_opt;
  std::size_t iteration = 0;
};

// Neuralized-PID agents start at `baseline`; MLP agents draw their actor from
// `rng`. The 64x64 tanh critic is always drawn from `rng`.
Agent make_agent(const PolicyVariant& variant,
                 const controllers::PidGains& baseline, const TrainConfig& cfg,
                 Rng& rng);

controllers::PolicyParams export_policy(const Agent& agent);

// Rebuilds the trainable actor from policy parameters (inverse of
// export_policy, exact for the neuralized PID).
void import_policy(Agent& agent, const controllers::PolicyParams& params);

double critic_value(const Agent& agent, std::span<const double> features);

// One full episode with sampled actions; rewards from the `metrics` trackers.
RolloutBuffer collect_rollout(const spillsim::EnvConfig& env_cfg,
                              std::uint64_t env_seed, const Agent& agent,
                              const RewardConfig& reward_cfg, Rng& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Recursive GAE with a zero bootstrap after the last (or any done) step.
// Advantages are not normalized here.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const char> dones, double gamma, double lambda);

// Fills buffer.returns (advantages + values) and buffer.advantages, the
// latter normalized to zero mean / unit std when the buffer has > 1 entry.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

struct LossReport {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate actor loss -mean(min(r A, clip(r, 1-eps, 1+eps) A)) for
// given new/old log-probs and advantages, with its derivative w.r.t. each new
// log-prob (already divided by the batch size).
double clipped_surrogate(std::span<const double> new_log_probs,
                         std::span<const double> old_log_probs,
                         std::span<const double> advantages, double clip_eps,
                         std::span<double> grad_new_log_probs);

struct MinibatchGradients {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  std::size_t clipped = 0;  // samples with |ratio - 1| > clip_eps
  std::vector<double> actor;  // d total / d actor params
  double log_std = 0.0;       // d total / d log_std
  std::vector<double> critic;  // d total / d critic params
};

// Loss actor + value_coef * value - entropy_coef * entropy over the given
// transitions, with its exact gradient.
MinibatchGradients minibatch_gradients(const Agent& agent,
                                       const RolloutBuffer& buffer,
                                       std::span<const std::size_t> indices,
                                       const TrainConfig& cfg);

// epochs_per_iter passes of shuffled minibatches, one optimizer step per
// minibatch for actor, log_std and critic. Averages are over all minibatches.
LossReport ppo_update(Agent& agent, const RolloutBuffer& buffer,
                      const TrainConfig& cfg, Rng& rng);

struct SeedReport {
  std::uint64_t seed = 0;
  double sdf_noise = 0.0;
  double sdf_pid = 0.0;
  double sdf_rl = 0.0;
  double vs_pid_pct = 0.0;
  double vs_noise_pct = 0.0;
};

struct RunReport {
  std::vector<SeedReport> per_seed;
  double mean_sdf_noise = 0.0;
  double mean_sdf_pid = 0.0;
  double mean_sdf_rl = 0.0;
  // Means of per-seed improvements.
  double vs_pid_pct = 0.0;
  double vs_noise_pct = 0.0;
  // Improvements of the mean SDFs.
  double vs_pid_of_means_pct = 0.0;
  double vs_noise_of_means_pct = 0.0;
};

// Mean-action evaluation on each seed. Seeds fan out over up to `threads`
// workers; results are merged by seed index.
RunReport evaluate(const spillsim::EnvConfig& env_cfg,
                   std::span<const std::uint64_t> seeds,
                   const controllers::PolicyParams& policy,
                   const controllers::PidGains& baseline,
                   std::size_t threads = 1);

struct CurveRow {
  std::size_t iter = 0;
  std::uint64_t seed = 0;
  double mean_reward = 0.0;
  double sdf_rl = 0.0;
  double sdf_pid = 0.0;
  double sdf_noise = 0.0;
};

struct TrainResult {
  Agent agent;  // final agent, or the last good one after a divergence
  std::vector<CurveRow> curve;
  std::vector<LossReport> losses;
  RunReport report;
  std::optional<std::string> divergence;
};

// collect -> GAE -> update for cfg.iterations episodes. The environment seed
// advances through cfg.seeds every seed_rotation_period episodes. After each
// update the mean-action policy is scored on that iteration's seed.
TrainResult train(const TrainConfig& cfg, const spillsim::EnvConfig& env_cfg,
                  const RewardConfig& reward_cfg, const PolicyVariant& variant,
                  const controllers::PidGains& baseline,
                  std::size_t eval_threads = 1);

std::uint64_t training_seed(const TrainConfig& cfg, std::size_t iteration);

}  // namespace spillreg::ppo
