#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "spillreg/rng.hpp"

namespace spillreg {

// Spill-rate samples x_0..x_{T-1} of one episode.
using SpillTrace = std::vector<double>;

namespace spillsim {

// Surrogate slow-extraction spill: reference rate 1 plus harmonic
// power-supply ripple plus an AR(1) (discretized Ornstein-Uhlenbeck) drift.
// The defaults put the unregulated spill well below an SDF of 0.6.
struct EnvConfig {
  std::size_t steps_per_episode = 430;
  double dt = 1e-4;  // 10 samples per millisecond
  double reference = 1.0;
  std::vector<double> ripple_amps{0.10, 0.05};
  std::vector<double> ripple_freqs{60.0, 180.0};
  double ou_rho = 0.9;
  double ou_sigma = 0.45;
  double clamp_lo = 0.0;
  double clamp_hi = 2.0;
  double action_bound = 1.0;

  // Throws ConfigError naming the first violated field.
  void validate() const;

  bool operator==(const EnvConfig&) const = default;
};

// Configuration with every noise source switched off.
EnvConfig zero_noise_config();

struct EnvState {
  std::size_t t = 0;
  double ou_value = 0.0;
  std::vector<double> phases;  // radians, one per ripple component
  double last_action = 0.0;
  SpillTrace raw_trace;
  SpillTrace corrected_trace;
  std::vector<double> actions;  // actuation applied at each step
  Rng rng;
};

EnvState reset(const EnvConfig& config, std::uint64_t seed);

// Advances the drift process and returns the uncorrected rate at step t.
// step() calls this exactly once per step.
double raw_next(EnvState& state, const EnvConfig& config);

struct StepResult {
  double obs = 0.0;  // corrected rate x_t
  bool done = false;
};

// Applies the held correction `action` (the previous decision) to the next
// raw sample: x_t = clamp(raw_t - action, clamp_lo, clamp_hi).
StepResult step(EnvState& state, const EnvConfig& config, double action);

double clamp_action(const EnvConfig& config, double action);

// Open-loop rollout with zero actuation; returns the raw trace.
SpillTrace raw_episode(const EnvConfig& config, std::uint64_t seed);

// CSV `t,raw,corrected,action`, 9 significant digits.
void write_trace_csv(std::ostream& out, const EnvState& state);

}  // namespace spillsim
}  // namespace spillreg
