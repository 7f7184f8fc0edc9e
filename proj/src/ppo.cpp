#include "spillreg/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "spillreg/errors.hpp"
#include "spillreg/metrics.hpp"

namespace spillreg::ppo {

using controllers::PolicyKind;
using controllers::PolicyParams;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSampleStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

std::vector<double> scale(std::span<const double> features,
                          std::span<const double> scales) {
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = features[i] * scales[i];
  return out;
}

double clamp_log_std(double v) {
  return std::clamp(v, controllers::kLogStdMin, controllers::kLogStdMax);
}

}  // namespace

void RewardConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("reward.alpha", "must lie in [0, 1]");
  }
}

std::string RewardConfig::label() const {
  if (kind == RewardKind::kNegSum) return "-SUM";
  std::ostringstream os;
  os << "-EMA (alpha=" << alpha << ")";
  return os.str();
}

void TrainConfig::validate(std::size_t buffer_len) const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("train.gamma", "must lie in (0, 1]");
  }
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigError("train.gae_lambda", "must lie in [0, 1]");
  }
  if (!(clip_eps > 0.0)) throw ConfigError("train.clip_eps", "must be positive");
  if (epochs_per_iter == 0) {
    throw ConfigError("train.epochs_per_iter", "must be positive");
  }
  if (minibatch == 0 || minibatch > buffer_len) {
    throw ConfigError("train.minibatch", "must lie in [1, episode length]");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("train.lr", "must be positive");
  }
  if (!std::isfinite(value_coef) || !std::isfinite(entropy_coef)) {
    throw ConfigError("train.value_coef", "loss coefficients must be finite");
  }
  if (seed_rotation_period == 0) {
    throw ConfigError("train.seed_rotation_period", "must be positive");
  }
  if (seeds.empty()) throw ConfigError("train.seeds", "must not be empty");
}

std::uint64_t training_seed(const TrainConfig& cfg, std::size_t iteration) {
  return cfg.seeds[(iteration / cfg.seed_rotation_period) % cfg.seeds.size()];
}

Agent make_agent(const PolicyVariant& variant,
                 const controllers::PidGains& baseline, const TrainConfig& cfg,
                 Rng& rng) {
  Agent agent;
  agent.variant = variant;
  const std::size_t n = controllers::feature_count(variant.state);
  if (variant.policy == PolicyKind::kMlp) {
    import_policy(agent, controllers::init_mlp_policy(variant.state, baseline.dt, rng));
  } else {
    import_policy(agent, controllers::init_neural_pid(baseline, variant.state));
  }
  agent.critic = gradnet::DenseNet::mlp({n, 64, 64, 1}, gradnet::Activation::kTanh);
  agent.critic.init(rng, std::numbers::sqrt2, 0.01);
  agent.actor_opt =
      gradnet::AdamState::for_params(agent.actor.param_count(), cfg.lr, cfg.optimizer);
  agent.log_std_opt = gradnet::AdamState::for_params(1, cfg.lr, cfg.optimizer);
  agent.critic_opt =
      gradnet::AdamState::for_params(agent.critic.param_count(), cfg.lr, cfg.optimizer);
  return agent;
}

void import_policy(Agent& agent, const PolicyParams& params) {
  params.validate();
  agent.variant = {params.kind, params.variant};
  agent.feature_scale = params.feature_scale;
  agent.log_std = params.log_std;
  if (params.kind == PolicyKind::kMlp) {
    agent.actor = params.network;
    return;
  }
  const std::size_t n = params.weights.size();
  agent.actor = gradnet::DenseNet({{n, 1, gradnet::Activation::kIdentity}});
  std::vector<double> flat(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    flat[i] = params.weights[i] / params.feature_scale[i];
  }
  flat[n] = params.bias;
  agent.actor.set_params(flat);
}

PolicyParams export_policy(const Agent& agent) {
  PolicyParams p;
  p.kind = agent.variant.policy;
  p.variant = agent.variant.state;
  p.feature_scale = agent.feature_scale;
  p.log_std = agent.log_std;
  if (p.kind == PolicyKind::kMlp) {
    p.network = agent.actor;
    return p;
  }
  const auto flat = agent.actor.params();
  const std::size_t n = flat.size() - 1;
  p.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.weights[i] = flat[i] * p.feature_scale[i];
  p.bias = flat[n];
  return p;
}

double critic_value(const Agent& agent, std::span<const double> features) {
  gradnet::Tape tape;
  return gradnet::forward(agent.critic, scale(features, agent.feature_scale),
                          tape)[0];
}

RolloutBuffer collect_rollout(const spillsim::EnvConfig& env_cfg,
                              std::uint64_t env_seed, const Agent& agent,
                              const RewardConfig& reward_cfg, Rng& rng) {
  reward_cfg.validate();
  const PolicyParams policy = export_policy(agent);
  RolloutBuffer buffer;
  buffer.env = spillsim::reset(env_cfg, env_seed);
  buffer.transitions.reserve(env_cfg.steps_per_episode);
  controllers::FeatureTracker tracker(policy.variant, env_cfg);
  metrics::EmaTracker ema(reward_cfg.kind == RewardKind::kNegEma ? reward_cfg.alpha
                                                                  : 0.0);
  metrics::SumTracker sum(env_cfg.steps_per_episode);

  double applied = 0.0;
  bool done = false;
  while (!done) {
    const std::size_t t = buffer.env.t;
    try {
      const auto r = spillsim::step(buffer.env, env_cfg, applied);
      done = r.done;
      const auto& state = tracker.update(r.obs, buffer.env.raw_trace.back(), applied);
      const double err = std::abs(r.obs - env_cfg.reference);
      Transition tr;
      tr.reward = reward_cfg.kind == RewardKind::kNegEma ? -ema.push(err)
                                                         : -sum.push(err);
      const auto sample = controllers::policy_sample(policy, state, rng);
      tr.features = state.features;
      tr.action = sample.action;
      tr.log_prob = sample.log_prob;
      tr.value = critic_value(agent, state.features);
      tr.done = done;
      if (!std::isfinite(tr.action) || !std::isfinite(tr.value) ||
          !std::isfinite(tr.log_prob)) {
        throw DivergenceError(t, "non-finite action, value or log-prob in rollout");
      }
      buffer.transitions.push_back(std::move(tr));
      applied = spillsim::clamp_action(env_cfg, sample.action);
    } catch (const DivergenceError&) {
      throw;
    } catch (const Error& e) {
      throw Error("rollout step " + std::to_string(t) + ": " + e.what());
    }
  }
  return buffer;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const char> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw ShapeError("GAE inputs must have equal lengths");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double next_value = i + 1 < n ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * next_value * not_done - values[i];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
  }
  return out;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t n = buffer.transitions.size();
  std::vector<double> rewards(n), values(n);
  std::vector<char> dones(n);
  for (std::size_t i = 0; i < n; ++i) {
    rewards[i] = buffer.transitions[i].reward;
    values[i] = buffer.transitions[i].value;
    dones[i] = buffer.transitions[i].done ? 1 : 0;
  }
  auto result = gae(rewards, values, dones, gamma, lambda);
  buffer.returns = std::move(result.returns);
  buffer.advantages = std::move(result.advantages);
  if (n > 1) {
    const double mean =
        std::accumulate(buffer.advantages.begin(), buffer.advantages.end(), 0.0) /
        static_cast<double>(n);
    double var = 0.0;
    for (double a : buffer.advantages) var += (a - mean) * (a - mean);
    const double std = std::sqrt(var / static_cast<double>(n));
    for (double& a : buffer.advantages) a = (a - mean) / (std + 1e-8);
  }
}

double clipped_surrogate(std::span<const double> new_log_probs,
                         std::span<const double> old_log_probs,
                         std::span<const double> advantages, double clip_eps,
                         std::span<double> grad_new_log_probs) {
  const std::size_t n = new_log_probs.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(new_log_probs[i] - old_log_probs[i]);
    const double a = advantages[i];
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * a;
    loss -= std::min(unclipped, clipped);
    // The clipped branch is flat in the log-prob whenever it is the minimum.
    grad_new_log_probs[i] =
        unclipped <= clipped ? -unclipped / static_cast<double>(n) : 0.0;
  }
  return loss / static_cast<double>(n);
}

MinibatchGradients minibatch_gradients(const Agent& agent,
                                       const RolloutBuffer& buffer,
                                       std::span<const std::size_t> indices,
                                       const TrainConfig& cfg) {
  const std::size_t m = indices.size();
  MinibatchGradients out;
  out.actor.assign(agent.actor.param_count(), 0.0);
  out.critic.assign(agent.critic.param_count(), 0.0);
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);
  const double log_std = clamp_log_std(agent.log_std);
  const bool log_std_free = agent.log_std > controllers::kLogStdMin &&
                            agent.log_std < controllers::kLogStdMax;

  std::vector<gradnet::Tape> tapes(m);
  std::vector<std::vector<double>> inputs(m);
  std::vector<double> means(m), new_lp(m), old_lp(m), adv(m), grad_lp(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& tr = buffer.transitions[indices[k]];
    inputs[k] = scale(tr.features, agent.feature_scale);
    means[k] = gradnet::forward(agent.actor, inputs[k], tapes[k])[0];
    new_lp[k] = controllers::gaussian_log_prob(tr.action, means[k], log_std);
    old_lp[k] = tr.log_prob;
    adv[k] = buffer.advantages[indices[k]];
    if (std::abs(std::exp(new_lp[k] - old_lp[k]) - 1.0) > cfg.clip_eps) ++out.clipped;
  }
  out.actor_loss = clipped_surrogate(new_lp, old_lp, adv, cfg.clip_eps, grad_lp);
  out.entropy =
      log_std + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);

  out.log_std = log_std_free ? -cfg.entropy_coef : 0.0;
  const double inv_var = std::exp(-2.0 * log_std);
  for (std::size_t k = 0; k < m; ++k) {
    const double diff = buffer.transitions[indices[k]].action - means[k];
    const double g_mean = grad_lp[k] * diff * inv_var;
    gradnet::backward_accumulate(agent.actor, tapes[k], std::span(&g_mean, 1),
                                 out.actor);
    if (log_std_free) out.log_std += grad_lp[k] * (diff * diff * inv_var - 1.0);
  }

  gradnet::Tape critic_tape;
  for (std::size_t k = 0; k < m; ++k) {
    const double v = gradnet::forward(agent.critic, inputs[k], critic_tape)[0];
    const double err = v - buffer.returns[indices[k]];
    out.value_loss += err * err * inv_m;
    const double g = cfg.value_coef * 2.0 * err * inv_m;
    gradnet::backward_accumulate(agent.critic, critic_tape, std::span(&g, 1),
                                 out.critic);
  }
  return out;
}

LossReport ppo_update(Agent& agent, const RolloutBuffer& buffer,
                      const TrainConfig& cfg, Rng& rng) {
  const std::size_t n = buffer.transitions.size();
  if (buffer.advantages.size() != n || buffer.returns.size() != n) {
    throw UsageError("ppo_update needs a buffer with computed advantages");
  }
  cfg.validate(n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  LossReport report;
  std::size_t batches = 0;
  std::size_t clipped = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_iter; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < n; start += cfg.minibatch) {
      const std::size_t m = std::min(cfg.minibatch, n - start);
      auto g = minibatch_gradients(agent, buffer,
                                   std::span(order).subspan(start, m), cfg);
      const double total =
          g.actor_loss + cfg.value_coef * g.value_loss - cfg.entropy_coef * g.entropy;
      if (!std::isfinite(total)) {
        std::ostringstream os;
        os << "non-finite loss (actor " << g.actor_loss << ", value "
           << g.value_loss << ", log_std " << agent.log_std << ") in epoch "
           << epoch;
        throw DivergenceError(agent.actor_opt.step, os.str());
      }
      gradnet::adam_step(agent.actor_opt, agent.actor.mutable_params(), g.actor);
      gradnet::adam_step(agent.log_std_opt, std::span(&agent.log_std, 1),
                         std::span(&g.log_std, 1));
      agent.log_std = clamp_log_std(agent.log_std);
      gradnet::adam_step(agent.critic_opt, agent.critic.mutable_params(), g.critic);

      report.actor_loss += g.actor_loss;
      report.value_loss += g.value_loss;
      report.entropy += g.entropy;
      clipped += g.clipped;
      ++batches;
    }
  }
  if (batches > 0) {
    const double b = static_cast<double>(batches);
    report.actor_loss /= b;
    report.value_loss /= b;
    report.entropy /= b;
    report.clip_fraction = static_cast<double>(clipped) /
                           static_cast<double>(n * cfg.epochs_per_iter);
  }
  return report;
}

RunReport evaluate(const spillsim::EnvConfig& env_cfg,
                   std::span<const std::uint64_t> seeds,
                   const PolicyParams& policy,
                   const controllers::PidGains& baseline, std::size_t threads) {
  policy.validate();
  baseline.validate();
  RunReport report;
  report.per_seed.resize(seeds.size());
  std::vector<std::exception_ptr> failures(seeds.size());

  auto work = [&](std::size_t i) {
    try {
      SeedReport& r = report.per_seed[i];
      r.seed = seeds[i];
      r.sdf_noise = metrics::sdf(spillsim::raw_episode(env_cfg, seeds[i])).sdf;
      r.sdf_pid = metrics::sdf(
          controllers::run_pid_episode(env_cfg, seeds[i], baseline).corrected_trace).sdf;
      r.sdf_rl = metrics::sdf(
          controllers::run_policy_episode(env_cfg, seeds[i], policy).corrected_trace).sdf;
      r.vs_pid_pct = metrics::improvement(r.sdf_rl, r.sdf_pid);
      r.vs_noise_pct = metrics::improvement(r.sdf_rl, r.sdf_noise);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < seeds.size(); i += workers) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  if (seeds.empty()) return report;
  const double n = static_cast<double>(seeds.size());
  for (const auto& r : report.per_seed) {
    report.mean_sdf_noise += r.sdf_noise / n;
    report.mean_sdf_pid += r.sdf_pid / n;
    report.mean_sdf_rl += r.sdf_rl / n;
    report.vs_pid_pct += r.vs_pid_pct / n;
    report.vs_noise_pct += r.vs_noise_pct / n;
  }
  report.vs_pid_of_means_pct =
      metrics::improvement(report.mean_sdf_rl, report.mean_sdf_pid);
  report.vs_noise_of_means_pct =
      metrics::improvement(report.mean_sdf_rl, report.mean_sdf_noise);
  return report;
}

TrainResult train(const TrainConfig& cfg, const spillsim::EnvConfig& env_cfg,
                  const RewardConfig& reward_cfg, const PolicyVariant& variant,
                  const controllers::PidGains& baseline,
                  std::size_t eval_threads) {
  env_cfg.validate();
  reward_cfg.validate();
  cfg.validate(env_cfg.steps_per_episode);
  baseline.validate();

  Rng init_rng(derive_seed(cfg.master_seed, kInitStream));
  Rng sample_rng(derive_seed(cfg.master_seed, kSampleStream));
  Rng shuffle_rng(derive_seed(cfg.master_seed, kShuffleStream));

  TrainResult result;
  result.agent = make_agent(variant, baseline, cfg, init_rng);
  result.curve.reserve(cfg.iterations);

  // Baseline scores per training seed, computed once.
  std::vector<double> sdf_noise(cfg.seeds.size()), sdf_pid(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    sdf_noise[i] = metrics::sdf(spillsim::raw_episode(env_cfg, cfg.seeds[i])).sdf;
    sdf_pid[i] = metrics::sdf(
        controllers::run_pid_episode(env_cfg, cfg.seeds[i], baseline).corrected_trace).sdf;
  }

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const std::size_t seed_idx = (it / cfg.seed_rotation_period) % cfg.seeds.size();
    const std::uint64_t seed = cfg.seeds[seed_idx];
    Agent candidate = result.agent;
    try {
      RolloutBuffer buffer =
          collect_rollout(env_cfg, seed, candidate, reward_cfg, sample_rng);
      compute_gae(buffer, cfg.gamma, cfg.gae_lambda);
      LossReport loss = ppo_update(candidate, buffer, cfg, shuffle_rng);
      candidate.iteration = it + 1;

      CurveRow row;
      row.iter = it;
      row.seed = seed;
      double reward_sum = 0.0;
      for (const auto& tr : buffer.transitions) reward_sum += tr.reward;
      row.mean_reward = reward_sum / static_cast<double>(buffer.transitions.size());
      row.sdf_rl = metrics::sdf(controllers::run_policy_episode(
                                    env_cfg, seed, export_policy(candidate))
                                    .corrected_trace)
                       .sdf;
      row.sdf_pid = sdf_pid[seed_idx];
      row.sdf_noise = sdf_noise[seed_idx];
      if (!std::isfinite(row.mean_reward) || !std::isfinite(row.sdf_rl)) {
        throw DivergenceError(candidate.actor_opt.step, "non-finite episode metrics");
      }
      result.curve.push_back(row);
      result.losses.push_back(loss);
      result.agent = std::move(candidate);
    } catch (const DivergenceError& e) {
      result.divergence = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
  }

  result.report = evaluate(env_cfg, cfg.seeds, export_policy(result.agent),
                           baseline, eval_threads);
  return result;
}

}  // namespace spillreg::ppo
