#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spillreg/gradnet.hpp"
#include "spillreg/rng.hpp"
#include "spillreg/spillsim.hpp"

namespace spillreg::controllers {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double dt = 1e-4;

  void validate() const;
  bool operator==(const PidGains&) const = default;
};

// Tracking-error features of the corrected spill up to the current step.
struct ErrorState {
  double current_error = 0.0;    // P = x_t - reference
  double error_sum = 0.0;        // I = sum_{tau<=t} (x_tau - reference)
  double error_diff_rate = 0.0;  // D = (e_t - e_{t-1}) / dt, 0 at t = 0
  double prev_error = 0.0;
  std::size_t count = 0;  // samples seen

  void update(double x, double reference, double dt);
};

// K_P P + K_I I + K_D D.
double pid_update(const PidGains& gains, const ErrorState& err);

enum class StateVariant {
  kPidAct,  // [P, I, D, Act]
  kPid3,    // [P, I, D]
  kCdOver,  // [CD, Over1, P, Act]
};

std::string to_string(StateVariant v);
StateVariant state_variant_from_string(const std::string& name);
std::size_t feature_count(StateVariant v);

struct StateVector {
  StateVariant variant = StateVariant::kPidAct;
  std::vector<double> features;
};

// Builds the policy observation step by step from the corrected and raw
// samples. Act is the actuation that produced the current sample.
class FeatureTracker {
 public:
  FeatureTracker(StateVariant variant, const spillsim::EnvConfig& config);

  const StateVector& update(double corrected, double raw, double last_action);
  const ErrorState& errors() const { return err_; }
  const StateVector& state() const { return state_; }

 private:
  StateVariant variant_;
  double reference_;
  double dt_;
  double horizon_;
  ErrorState err_;
  double prev_corrected_ = 0.0;
  std::size_t over_one_ = 0;
  StateVector state_;
};

// Per-feature input scales, all powers of two so that the rescaled
// parameterization used for optimization maps back to gains exactly. The
// derivative feature is scaled by ~dt, bringing every input to O(1).
std::vector<double> feature_scales(StateVariant variant, double dt);

enum class PolicyKind {
  kNeuralPid,  // linear map over the features: learnable PID gains + action head
  kMlp,        // 64x64 tanh network over the same features
};

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& name);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kInitialLogStd = -1.0;

struct PolicyParams {
  PolicyKind kind = PolicyKind::kNeuralPid;
  StateVariant variant = StateVariant::kPidAct;
  // kNeuralPid: one weight per feature in natural units. For kPidAct/kPid3
  // the first three are K_P, K_I, K_D and kPidAct's fourth is the action head.
  std::vector<double> weights;
  double bias = 0.0;
  double log_std = kInitialLogStd;
  std::vector<double> feature_scale;
  gradnet::DenseNet network;  // kMlp only, consumes scaled features

  void validate() const;
};

// Neuralized PID initialized at the given gains (action head and bias zero).
// kCdOver starts from the incremental PI form a_t = a_{t-1} + K_P CD + K_I P.
PolicyParams init_neural_pid(const PidGains& gains, StateVariant variant);

PolicyParams init_mlp_policy(StateVariant variant, double dt, Rng& rng);

std::vector<double> scaled_features(const PolicyParams& params,
                                    const StateVector& state);

double policy_mean(const PolicyParams& params, const StateVector& state);

double gaussian_log_prob(double x, double mean, double log_std);

struct PolicySample {
  double action = 0.0;  // pre-clamp sample
  double log_prob = 0.0;
};

PolicySample policy_sample(const PolicyParams& params, const StateVector& state,
                           Rng& rng);

// Closed-loop episode. `control` sees the feature tracker after each new
// sample and returns the next action; it is clamped to the action bound and
// applied with one step of delay.
using ControlFn = std::function<double(const FeatureTracker&)>;
spillsim::EnvState run_closed_loop(const spillsim::EnvConfig& config,
                                   std::uint64_t seed, StateVariant variant,
                                   const ControlFn& control);

spillsim::EnvState run_pid_episode(const spillsim::EnvConfig& config,
                                   std::uint64_t seed, const PidGains& gains);

// Deterministic mean-action rollout of a policy.
spillsim::EnvState run_policy_episode(const spillsim::EnvConfig& config,
                                      std::uint64_t seed,
                                      const PolicyParams& params);

struct GainGrid {
  std::vector<double> kp;
  std::vector<double> ki;
  std::vector<double> kd;

  static GainGrid defaults();
};

struct TuneResult {
  PidGains gains;
  double mean_sdf = 0.0;
};

// Grid search on mean SDF over `seeds`, then three rounds of coordinate
// descent with per-axis steps halving each round. Ties go to the smaller
// (|kp|, |ki|, |kd|) in lexicographic order.
TuneResult tune_pid(const spillsim::EnvConfig& config,
                    std::span<const std::uint64_t> seeds, const GainGrid& grid);

double mean_pid_sdf(const spillsim::EnvConfig& config,
                    std::span<const std::uint64_t> seeds, const PidGains& gains);

}  // namespace spillreg::controllers
