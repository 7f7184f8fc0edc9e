#include "spillreg/metrics.hpp"

#include <cmath>
#include <string>

#include "spillreg/errors.hpp"

namespace spillreg::metrics {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InputError("EMA alpha must lie in [0, 1], got " +
                     std::to_string(alpha));
  }
}

}  // namespace

SdfReport sdf(std::span<const double> samples) {
  if (samples.size() < 2) {
    throw InputError("SDF needs at least 2 samples, got " +
                     std::to_string(samples.size()));
  }
  double mean = 0.0;
  for (double x : samples) {
    if (!std::isfinite(x)) throw InputError("non-finite spill sample");
    mean += x;
  }
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double x : samples) var += (x - mean) * (x - mean);
  var /= static_cast<double>(samples.size());

  SdfReport report;
  report.spill_std = std::sqrt(var);
  report.sdf = 1.0 / (1.0 + var);
  report.n_samples = samples.size();
  return report;
}

EmaTracker::EmaTracker(double alpha) : alpha_(alpha) { check_alpha(alpha); }

std::vector<double> ema_reward(std::span<const double> abs_errors,
                               double alpha) {
  EmaTracker ema(alpha);
  std::vector<double> rewards;
  rewards.reserve(abs_errors.size());
  for (double e : abs_errors) rewards.push_back(-ema.push(e));
  return rewards;
}

double ema_direct_oracle(std::span<const double> abs_errors, double alpha,
                         std::size_t t) {
  check_alpha(alpha);
  if (t >= abs_errors.size()) throw InputError("EMA oracle index out of range");
  double total = 0.0;
  double weight = alpha;  // alpha (1 - alpha)^(t - tau)
  for (std::size_t k = 0; k <= t; ++k) {
    total += weight * abs_errors[t - k];
    weight *= 1.0 - alpha;
  }
  return total;
}

SumTracker::SumTracker(std::size_t horizon)
    : horizon_(static_cast<double>(horizon)) {
  if (horizon == 0) throw InputError("SUM reward horizon must be positive");
}

std::vector<double> sum_reward(std::span<const double> abs_errors,
                               std::size_t horizon) {
  SumTracker sum(horizon);
  std::vector<double> rewards;
  rewards.reserve(abs_errors.size());
  for (double e : abs_errors) rewards.push_back(-sum.push(e));
  return rewards;
}

std::vector<double> abs_errors(std::span<const double> samples,
                               double reference) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (double x : samples) out.push_back(std::abs(x - reference));
  return out;
}

double improvement(double sdf_a, double sdf_b) {
  if (!(sdf_b > 0.0)) throw InputError("improvement baseline must be positive");
  return 100.0 * (sdf_a - sdf_b) / sdf_b;
}

}  // namespace spillreg::metrics
