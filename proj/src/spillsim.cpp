#include "spillreg/spillsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "spillreg/errors.hpp"

namespace spillreg::spillsim {

void EnvConfig::validate() const {
  if (steps_per_episode == 0) {
    throw ConfigError("steps_per_episode", "must be positive");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ConfigError("dt", "must be positive and finite");
  }
  if (!std::isfinite(reference)) {
    throw ConfigError("reference", "must be finite");
  }
  if (ripple_amps.size() != ripple_freqs.size()) {
    throw ConfigError("ripple_freqs", "must have one entry per ripple amplitude");
  }
  for (double a : ripple_amps) {
    if (!std::isfinite(a)) throw ConfigError("ripple_amps", "must be finite");
  }
  for (double f : ripple_freqs) {
    if (!std::isfinite(f)) throw ConfigError("ripple_freqs", "must be finite");
  }
  if (!(ou_rho >= 0.0 && ou_rho < 1.0)) {
    throw ConfigError("ou_rho", "must lie in [0, 1)");
  }
  if (!(ou_sigma >= 0.0) || !std::isfinite(ou_sigma)) {
    throw ConfigError("ou_sigma", "must be non-negative and finite");
  }
  if (!(clamp_lo < reference)) {
    throw ConfigError("clamp_lo", "must be below the reference rate");
  }
  if (!(reference < clamp_hi)) {
    throw ConfigError("clamp_hi", "must be above the reference rate");
  }
  if (!(action_bound > 0.0) || !std::isfinite(action_bound)) {
    throw ConfigError("action_bound", "must be positive and finite");
  }
}

EnvConfig zero_noise_config() {
  EnvConfig config;
  config.ripple_amps.clear();
  config.ripple_freqs.clear();
  config.ou_sigma = 0.0;
  return config;
}

EnvState reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  EnvState state;
  state.rng.seed(seed);
  state.phases.reserve(config.ripple_amps.size());
  for (std::size_t k = 0; k < config.ripple_amps.size(); ++k) {
    state.phases.push_back(state.rng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  state.raw_trace.reserve(config.steps_per_episode);
  state.corrected_trace.reserve(config.steps_per_episode);
  state.actions.reserve(config.steps_per_episode);
  return state;
}

double raw_next(EnvState& state, const EnvConfig& config) {
  if (state.t >= config.steps_per_episode) {
    throw EpisodeExhaustedError("episode already ran its " +
                                std::to_string(config.steps_per_episode) +
                                " steps");
  }
  // Draw unconditionally so the noise stream does not depend on ou_sigma.
  const double xi = state.rng.normal();
  state.ou_value = config.ou_rho * state.ou_value + config.ou_sigma * xi;

  const double time = static_cast<double>(state.t) * config.dt;
  double rate = config.reference;
  for (std::size_t k = 0; k < config.ripple_amps.size(); ++k) {
    rate += config.ripple_amps[k] *
            std::sin(2.0 * std::numbers::pi * config.ripple_freqs[k] * time +
                     state.phases[k]);
  }
  return rate + state.ou_value;
}

StepResult step(EnvState& state, const EnvConfig& config, double action) {
  if (!std::isfinite(action)) {
    throw InvalidActionError("action must be finite");
  }
  const double raw = raw_next(state, config);
  const double corrected =
      std::clamp(raw - action, config.clamp_lo, config.clamp_hi);
  state.raw_trace.push_back(raw);
  state.corrected_trace.push_back(corrected);
  state.actions.push_back(action);
  state.last_action = action;
  ++state.t;
  return {corrected, state.t == config.steps_per_episode};
}

double clamp_action(const EnvConfig& config, double action) {
  return std::clamp(action, -config.action_bound, config.action_bound);
}

SpillTrace raw_episode(const EnvConfig& config, std::uint64_t seed) {
  EnvState state = reset(config, seed);
  while (!step(state, config, 0.0).done) {
  }
  return state.raw_trace;
}

void write_trace_csv(std::ostream& out, const EnvState& state) {
  const auto old_precision = out.precision(9);
  out << "t,raw,corrected,action\n";
  for (std::size_t t = 0; t < state.raw_trace.size(); ++t) {
    out << t << ',' << state.raw_trace[t] << ',' << state.corrected_trace[t]
        << ',' << state.actions[t] << '\n';
  }
  out.precision(old_precision);
}

}  // namespace spillreg::spillsim
