#include <doctest.h>

#include <cmath>
#include <vector>

#include "spillreg/errors.hpp"
#include "spillreg/metrics.hpp"
#include "spillreg/rng.hpp"

using namespace spillreg;

TEST_CASE("sdf of a constant spill is exactly one") {
  const std::vector<double> trace(430, 1.0);
  const auto r = metrics::sdf(trace);
  CHECK(r.sdf == 1.0);
  CHECK(r.spill_std == 0.0);
  CHECK(r.n_samples == 430);
}

TEST_CASE("sdf anchors") {
  // Two-point symmetric trace with population variance 2/3.
  const double d = std::sqrt(2.0 / 3.0);
  const std::vector<double> two_point{1.0 - d, 1.0 + d, 1.0 - d, 1.0 + d};
  CHECK(metrics::sdf(two_point).sdf == doctest::Approx(0.6).epsilon(1e-12));

  // mean 1.5, variance (3 * 0.25 + 2.25) / 4 = 0.75
  const std::vector<double> trace{1, 1, 1, 3};
  const auto r = metrics::sdf(trace);
  CHECK(r.spill_std == doctest::Approx(std::sqrt(0.75)));
  CHECK(r.sdf == doctest::Approx(1.0 / 1.75).epsilon(1e-14));
}

TEST_CASE("sdf rejects short or non-finite traces") {
  CHECK_THROWS_AS(metrics::sdf(std::vector<double>{1.0}), InputError);
  CHECK_THROWS_AS(metrics::sdf(std::vector<double>{}), InputError);
  CHECK_THROWS_AS(metrics::sdf(std::vector<double>{1.0, NAN}), InputError);
}

TEST_CASE("sdf is shift invariant and decreases under scaling") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(40), shifted(40), scaled(40);
    for (auto& v : x) v = 1.0 + 0.3 * rng.normal();
    const double shift = rng.uniform(-2.0, 2.0);
    const double c = 1.0 + rng.uniform(0.01, 2.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      shifted[i] = x[i] + shift;
      scaled[i] = x[i] * c;
    }
    const double base = metrics::sdf(x).sdf;
    CHECK(metrics::sdf(shifted).sdf == doctest::Approx(base).epsilon(1e-10));
    CHECK(metrics::sdf(scaled).sdf < base);
    CHECK(base > 0.0);
    CHECK(base < 1.0);
  }
}

TEST_CASE("ema reward recursion") {
  const std::vector<double> errors{0.2, 0.1};
  const auto r = metrics::ema_reward(errors, 0.5);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == doctest::Approx(-0.1));
  CHECK(r[1] == doctest::Approx(-0.1));

  const std::vector<double> e{0.3, 0.0, 0.7, 0.25};
  const auto full = metrics::ema_reward(e, 1.0);
  const auto none = metrics::ema_reward(e, 0.0);
  for (std::size_t t = 0; t < e.size(); ++t) {
    CHECK(full[t] == -e[t]);
    CHECK(none[t] == 0.0);
  }
  CHECK_THROWS_AS(metrics::ema_reward(e, 1.5), InputError);
  CHECK_THROWS_AS(metrics::ema_reward(e, -0.1), InputError);
}

TEST_CASE("ema direct oracle edge cases") {
  const std::vector<double> e{0.4, 0.2, 0.9};
  CHECK(metrics::ema_direct_oracle(e, 0.3, 0) == doctest::Approx(0.3 * 0.4));
  CHECK(metrics::ema_direct_oracle(e, 1.0, 2) == doctest::Approx(0.9));
  CHECK_THROWS_AS(metrics::ema_direct_oracle(e, 0.3, 3), InputError);
}

TEST_CASE("ema recursion matches the direct sum") {
  Rng rng(3);
  for (double alpha : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> e(60);
      for (auto& v : e) v = std::abs(rng.normal());
      const auto r = metrics::ema_reward(e, alpha);
      for (std::size_t t = 0; t < e.size(); ++t) {
        CHECK(std::abs(-r[t] - metrics::ema_direct_oracle(e, alpha, t)) < 1e-12);
        CHECK(r[t] <= 0.0);
      }
    }
  }
}

TEST_CASE("rewards vanish only while every error is zero") {
  const std::vector<double> e{0.0, 0.0, 0.5, 0.0};
  const auto r = metrics::ema_reward(e, 0.5);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] < 0.0);
  CHECK(r[3] < 0.0);
}

TEST_CASE("sum reward is the scaled running error sum") {
  const std::vector<double> e{0.2, 0.4, 0.1};
  const auto r = metrics::sum_reward(e, 4);
  CHECK(r[0] == doctest::Approx(-0.05));
  CHECK(r[1] == doctest::Approx(-0.15));
  CHECK(r[2] == doctest::Approx(-0.175));
  CHECK_THROWS_AS(metrics::sum_reward(e, 0), InputError);
}

TEST_CASE("improvement percentages") {
  CHECK(metrics::improvement(0.7, 0.7) == 0.0);
  CHECK(metrics::improvement(0.6, 0.5) == doctest::Approx(20.0));
  CHECK(metrics::improvement(0.4, 0.5) == doctest::Approx(-20.0));
  CHECK_THROWS_AS(metrics::improvement(0.4, 0.0), InputError);
}
