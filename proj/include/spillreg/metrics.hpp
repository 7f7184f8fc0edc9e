#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spillreg::metrics {

struct SdfReport {
  double sdf = 1.0;
  double spill_std = 0.0;  // population std of the samples
  std::size_t n_samples = 0;
};

// Spill Duty Factor 1 / (1 + std^2) of one spill. Requires >= 2 samples.
SdfReport sdf(std::span<const double> samples);

// Running exponential moving average of absolute tracking error, seeded at
// zero. push() returns the updated EMA; reward is its negation.
class EmaTracker {
 public:
  explicit EmaTracker(double alpha);
  double push(double abs_error) {
    ema_ = alpha_ * abs_error + (1.0 - alpha_) * ema_;
    return ema_;
  }
  double value() const { return ema_; }

 private:
  double alpha_;
  double ema_ = 0.0;
};

// r_t = -EMA(t, alpha) for every t, from the series |x_t - reference|.
std::vector<double> ema_reward(std::span<const double> abs_errors,
                               double alpha);

// Direct summation sum_{tau<=t} alpha (1-alpha)^(t-tau) e_tau. Test oracle for
// the recursion above.
double ema_direct_oracle(std::span<const double> abs_errors, double alpha,
                         std::size_t t);

// Scaled running sum r_t = -(1/horizon) * sum_{tau<=t} e_tau.
class SumTracker {
 public:
  explicit SumTracker(std::size_t horizon);
  double push(double abs_error) {
    sum_ += abs_error;
    return sum_ / horizon_;
  }

 private:
  double horizon_;
  double sum_ = 0.0;
};

std::vector<double> sum_reward(std::span<const double> abs_errors,
                               std::size_t horizon);

// |x_t - reference| for every sample.
std::vector<double> abs_errors(std::span<const double> samples,
                               double reference = 1.0);

// Relative improvement of a over b in percent.
double improvement(double sdf_a, double sdf_b);

}  // namespace spillreg::metrics
