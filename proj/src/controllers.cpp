#include "spillreg/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "spillreg/errors.hpp"
#include "spillreg/metrics.hpp"

namespace spillreg::controllers {

void PidGains::validate() const {
  if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd)) {
    throw InputError("PID gains must be finite");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw InputError("PID time step must be positive");
  }
}

void ErrorState::update(double x, double reference, double dt) {
  const double e = x - reference;
  error_diff_rate = count == 0 ? 0.0 : (e - current_error) / dt;
  prev_error = count == 0 ? e : current_error;
  current_error = e;
  error_sum += e;
  ++count;
}

double pid_update(const PidGains& gains, const ErrorState& err) {
  if (!std::isfinite(err.current_error) || !std::isfinite(err.error_sum) ||
      !std::isfinite(err.error_diff_rate)) {
    throw InputError("PID error state is not finite");
  }
  return gains.kp * err.current_error + gains.ki * err.error_sum +
         gains.kd * err.error_diff_rate;
}

std::string to_string(StateVariant v) {
  switch (v) {
    case StateVariant::kPid3:
      return "P,I,D";
    case StateVariant::kCdOver:
      return "CD,Over-1,P,Act";
    case StateVariant::kPidAct:
      break;
  }
  return "P,I,D,Act";
}

StateVariant state_variant_from_string(const std::string& name) {
  if (name == "P,I,D,Act" || name == "pid_act") return StateVariant::kPidAct;
  if (name == "P,I,D" || name == "pid") return StateVariant::kPid3;
  if (name == "CD,Over-1,P,Act" || name == "cd_over") return StateVariant::kCdOver;
  throw InputError("unknown state variant '" + name + "'");
}

std::size_t feature_count(StateVariant v) {
  return v == StateVariant::kPid3 ? 3 : 4;
}

FeatureTracker::FeatureTracker(StateVariant variant,
                               const spillsim::EnvConfig& config)
    : variant_(variant),
      reference_(config.reference),
      dt_(config.dt),
      horizon_(static_cast<double>(config.steps_per_episode)) {
  state_.variant = variant;
  state_.features.assign(feature_count(variant), 0.0);
}

const StateVector& FeatureTracker::update(double corrected, double raw,
                                          double last_action) {
  const bool first = err_.count == 0;
  err_.update(corrected, reference_, dt_);
  if (raw >= reference_) ++over_one_;
  auto& f = state_.features;
  switch (variant_) {
    case StateVariant::kPidAct:
      f[0] = err_.current_error;
      f[1] = err_.error_sum;
      f[2] = err_.error_diff_rate;
      f[3] = last_action;
      break;
    case StateVariant::kPid3:
      f[0] = err_.current_error;
      f[1] = err_.error_sum;
      f[2] = err_.error_diff_rate;
      break;
    case StateVariant::kCdOver:
      f[0] = first ? 0.0 : corrected - prev_corrected_;
      f[1] = static_cast<double>(over_one_) / horizon_;
      f[2] = err_.current_error;
      f[3] = last_action;
      break;
  }
  prev_corrected_ = corrected;
  return state_;
}

std::vector<double> feature_scales(StateVariant variant, double dt) {
  const double d_scale = std::exp2(std::round(std::log2(dt)));
  switch (variant) {
    case StateVariant::kPid3:
      return {1.0, 1.0, d_scale};
    case StateVariant::kCdOver:
      return {1.0, 1.0, 1.0, 1.0};
    case StateVariant::kPidAct:
      break;
  }
  return {1.0, 1.0, d_scale, 1.0};
}

std::string to_string(PolicyKind k) {
  return k == PolicyKind::kMlp ? "NN" : "PID";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "PID" || name == "neural_pid") return PolicyKind::kNeuralPid;
  if (name == "NN" || name == "mlp") return PolicyKind::kMlp;
  throw InputError("unknown policy kind '" + name + "'");
}

void PolicyParams::validate() const {
  const std::size_t n = feature_count(variant);
  if (feature_scale.size() != n) {
    throw ShapeError("policy feature scale does not match the state variant");
  }
  if (kind == PolicyKind::kNeuralPid) {
    if (weights.size() != n) {
      throw ShapeError("neuralized PID expects " + std::to_string(n) +
                       " weights, got " + std::to_string(weights.size()));
    }
  } else if (network.input_dim() != n || network.output_dim() != 1) {
    throw ShapeError("policy network shape does not match the state variant");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw InputError("policy weight is not finite");
  }
  if (!std::isfinite(bias) || !std::isfinite(log_std)) {
    throw InputError("policy bias/log_std is not finite");
  }
}

PolicyParams init_neural_pid(const PidGains& gains, StateVariant variant) {
  gains.validate();
  PolicyParams p;
  p.kind = PolicyKind::kNeuralPid;
  p.variant = variant;
  p.feature_scale = feature_scales(variant, gains.dt);
  switch (variant) {
    case StateVariant::kPidAct:
      p.weights = {gains.kp, gains.ki, gains.kd, 0.0};
      break;
    case StateVariant::kPid3:
      p.weights = {gains.kp, gains.ki, gains.kd};
      break;
    case StateVariant::kCdOver:
      p.weights = {gains.kp, 0.0, gains.ki, 1.0};
      break;
  }
  return p;
}

PolicyParams init_mlp_policy(StateVariant variant, double dt, Rng& rng) {
  PolicyParams p;
  p.kind = PolicyKind::kMlp;
  p.variant = variant;
  p.feature_scale = feature_scales(variant, dt);
  p.network = gradnet::DenseNet::mlp({feature_count(variant), 64, 64, 1},
                                     gradnet::Activation::kTanh);
  p.network.init(rng, std::numbers::sqrt2, 0.01);
  return p;
}

std::vector<double> scaled_features(const PolicyParams& params,
                                    const StateVector& state) {
  if (state.features.size() != params.feature_scale.size()) {
    throw ShapeError("state has " + std::to_string(state.features.size()) +
                     " features, policy expects " +
                     std::to_string(params.feature_scale.size()));
  }
  std::vector<double> out(state.features.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = state.features[i] * params.feature_scale[i];
  }
  return out;
}

double policy_mean(const PolicyParams& params, const StateVector& state) {
  if (params.kind == PolicyKind::kMlp) {
    gradnet::Tape tape;
    return gradnet::forward(params.network, scaled_features(params, state),
                            tape)[0];
  }
  if (state.features.size() != params.weights.size()) {
    throw ShapeError("state has " + std::to_string(state.features.size()) +
                     " features, policy expects " +
                     std::to_string(params.weights.size()));
  }
  // Same accumulation order as the single-layer actor network.
  double mean = params.bias;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    mean += params.weights[i] * state.features[i];
  }
  return mean;
}

double gaussian_log_prob(double x, double mean, double log_std) {
  const double z = (x - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

PolicySample policy_sample(const PolicyParams& params, const StateVector& state,
                           Rng& rng) {
  const double mean = policy_mean(params, state);
  const double log_std = std::clamp(params.log_std, kLogStdMin, kLogStdMax);
  PolicySample s;
  s.action = mean + std::exp(log_std) * rng.normal();
  s.log_prob = gaussian_log_prob(s.action, mean, log_std);
  return s;
}

spillsim::EnvState run_closed_loop(const spillsim::EnvConfig& config,
                                   std::uint64_t seed, StateVariant variant,
                                   const ControlFn& control) {
  spillsim::EnvState env = spillsim::reset(config, seed);
  FeatureTracker tracker(variant, config);
  double applied = 0.0;
  while (true) {
    const auto r = spillsim::step(env, config, applied);
    tracker.update(r.obs, env.raw_trace.back(), applied);
    if (r.done) break;
    applied = spillsim::clamp_action(config, control(tracker));
  }
  return env;
}

spillsim::EnvState run_pid_episode(const spillsim::EnvConfig& config,
                                   std::uint64_t seed, const PidGains& gains) {
  gains.validate();
  return run_closed_loop(config, seed, StateVariant::kPid3,
                         [&](const FeatureTracker& tr) {
                           return pid_update(gains, tr.errors());
                         });
}

spillsim::EnvState run_policy_episode(const spillsim::EnvConfig& config,
                                      std::uint64_t seed,
                                      const PolicyParams& params) {
  params.validate();
  return run_closed_loop(config, seed, params.variant,
                         [&](const FeatureTracker& tr) {
                           return policy_mean(params, tr.state());
                         });
}

GainGrid GainGrid::defaults() {
  return {{0.0, 0.25, 0.5, 0.75, 1.0},
          {0.0, 0.25, 0.5, 0.75, 1.0},
          {0.0, 2.5e-6, 5e-6, 7.5e-6, 1e-5}};
}

double mean_pid_sdf(const spillsim::EnvConfig& config,
                    std::span<const std::uint64_t> seeds,
                    const PidGains& gains) {
  double total = 0.0;
  for (auto seed : seeds) {
    total += metrics::sdf(run_pid_episode(config, seed, gains).corrected_trace).sdf;
  }
  return total / static_cast<double>(seeds.size());
}

namespace {

// True when candidate (a) should replace incumbent (b).
bool better(double score_a, const PidGains& a, double score_b,
            const PidGains& b) {
  if (score_a != score_b) return score_a > score_b;
  return std::make_tuple(std::abs(a.kp), std::abs(a.ki), std::abs(a.kd)) <
         std::make_tuple(std::abs(b.kp), std::abs(b.ki), std::abs(b.kd));
}

double axis_step(const std::vector<double>& axis) {
  if (axis.size() < 2) return 0.0;
  const auto [lo, hi] = std::minmax_element(axis.begin(), axis.end());
  return (*hi - *lo) / static_cast<double>(axis.size() - 1);
}

}  // namespace

TuneResult tune_pid(const spillsim::EnvConfig& config,
                    std::span<const std::uint64_t> seeds, const GainGrid& grid) {
  if (seeds.empty()) throw ConfigError("seeds", "tuning needs at least one seed");
  if (grid.kp.empty()) throw ConfigError("grid.kp", "empty gain axis");
  if (grid.ki.empty()) throw ConfigError("grid.ki", "empty gain axis");
  if (grid.kd.empty()) throw ConfigError("grid.kd", "empty gain axis");
  config.validate();

  TuneResult best;
  bool have = false;
  for (double kp : grid.kp) {
    for (double ki : grid.ki) {
      for (double kd : grid.kd) {
        const PidGains g{kp, ki, kd, config.dt};
        const double s = mean_pid_sdf(config, seeds, g);
        if (!have || better(s, g, best.mean_sdf, best.gains)) {
          best = {g, s};
          have = true;
        }
      }
    }
  }

  double steps[3] = {axis_step(grid.kp), axis_step(grid.ki), axis_step(grid.kd)};
  for (int round = 0; round < 3; ++round) {
    for (int axis = 0; axis < 3; ++axis) {
      if (steps[axis] == 0.0) continue;
      for (double dir : {-1.0, 1.0}) {
        PidGains g = best.gains;
        double* coord = axis == 0 ? &g.kp : axis == 1 ? &g.ki : &g.kd;
        *coord += dir * steps[axis];
        const double s = mean_pid_sdf(config, seeds, g);
        if (better(s, g, best.mean_sdf, best.gains)) best = {g, s};
      }
    }
    for (double& s : steps) s *= 0.5;
  }
  return best;
}

}  // namespace spillreg::controllers
