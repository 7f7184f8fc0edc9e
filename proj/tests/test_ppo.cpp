#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "spillreg/errors.hpp"
#include "spillreg/metrics.hpp"
#include "spillreg/ppo.hpp"

using namespace spillreg;
using namespace spillreg::ppo;

namespace {

const controllers::PidGains kGains{0.5, 0.25, 2.5e-6, 1e-4};

// Direct double-sum definition of GAE with a zero bootstrap at episode end.
std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      const double next = l + 1 < n ? v[l + 1] : 0.0;
      out[t] += weight * (r[l] + gamma * next - v[l]);
      weight *= gamma * lambda;
    }
  }
  return out;
}

double total_loss(const MinibatchGradients& g, const TrainConfig& cfg) {
  return g.actor_loss + cfg.value_coef * g.value_loss - cfg.entropy_coef * g.entropy;
}

spillsim::EnvConfig short_env() {
  spillsim::EnvConfig c;
  c.steps_per_episode = 48;
  return c;
}

TrainConfig short_train() {
  TrainConfig cfg;
  cfg.minibatch = 16;
  cfg.epochs_per_iter = 2;
  cfg.iterations = 3;
  return cfg;
}

}  // namespace

TEST_CASE("gae special cases") {
  const std::vector<double> r{0.5, -1.0, 2.0};
  const std::vector<double> v{0.1, 0.4, -0.3};
  const std::vector<char> d{0, 0, 1};
  const auto td = gae(r, v, d, 0.9, 0.0);
  CHECK(td.advantages[0] == doctest::Approx(0.5 + 0.9 * 0.4 - 0.1));
  CHECK(td.advantages[1] == doctest::Approx(-1.0 + 0.9 * -0.3 - 0.4));
  CHECK(td.advantages[2] == doctest::Approx(2.0 + 0.3));
  const auto myopic = gae(r, v, d, 0.0, 0.7);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(myopic.advantages[i] == doctest::Approx(r[i] - v[i]));
    CHECK(myopic.returns[i] == doctest::Approx(r[i]));
  }
  CHECK_THROWS_AS(gae(r, std::vector<double>{0.0}, d, 0.9, 0.9), ShapeError);
}

TEST_CASE("gae matches the direct sum") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> r(n), v(n);
    for (auto& x : r) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    std::vector<char> d(n, 0);
    d.back() = 1;
    const double gamma = rng.uniform();
    const double lambda = rng.uniform();
    const auto got = gae(r, v, d, gamma, lambda);
    const auto want = brute_gae(r, v, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      CHECK(std::abs(got.advantages[t] - want[t]) < 1e-12);
      CHECK(std::abs(got.returns[t] - (want[t] + v[t])) < 1e-12);
    }
  }
}

TEST_CASE("compute_gae normalizes advantages") {
  Rng init(1), sample(2);
  Agent agent = make_agent({}, kGains, TrainConfig{}, init);
  auto buf = collect_rollout(spillsim::EnvConfig{}, 0, agent, {}, sample);
  compute_gae(buf, 0.99, 0.95);
  const double n = static_cast<double>(buf.advantages.size());
  const double mean = std::accumulate(buf.advantages.begin(), buf.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : buf.advantages) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::sqrt(var / n) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("clipped surrogate by hand") {
  // Ratios 1.5 (A = 1) and 1.1 (A = -2), eps = 0.2:
  // min(1.5, 1.2) = 1.2, min(-2.2, -2.2) = -2.2, loss = -(1.2 - 2.2)/2 = 0.5.
  const std::vector<double> old_lp{0.0, 0.0};
  const std::vector<double> new_lp{std::log(1.5), std::log(1.1)};
  const std::vector<double> adv{1.0, -2.0};
  std::vector<double> grad(2);
  const double loss = clipped_surrogate(new_lp, old_lp, adv, 0.2, grad);
  CHECK(loss == doctest::Approx(0.5));
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == doctest::Approx(1.1));
}

TEST_CASE("clipped objective never exceeds the unclipped one") {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> old_lp{rng.normal()};
    const std::vector<double> new_lp{old_lp[0] + 0.5 * rng.normal()};
    const std::vector<double> adv{rng.normal()};
    std::vector<double> grad(1);
    const double objective = -clipped_surrogate(new_lp, old_lp, adv, 0.2, grad);
    CHECK(objective <= std::exp(new_lp[0] - old_lp[0]) * adv[0] + 1e-15);
  }
}

TEST_CASE("minibatch gradients match finite differences") {
  const auto env = short_env();
  TrainConfig cfg = short_train();
  cfg.entropy_coef = 0.01;
  for (auto policy : {controllers::PolicyKind::kNeuralPid, controllers::PolicyKind::kMlp}) {
    Rng init(11), sample(12);
    Agent agent = make_agent({policy, controllers::StateVariant::kPidAct}, kGains, cfg, init);
    auto buf = collect_rollout(env, 3, agent, {}, sample);
    compute_gae(buf, cfg.gamma, cfg.gae_lambda);

    // Move the actor a little so ratios differ from one.
    auto p = std::vector<double>(agent.actor.params().begin(), agent.actor.params().end());
    for (auto& x : p) x += 1e-3 * sample.normal();
    agent.actor.set_params(p);
    agent.log_std += 0.05;

    std::vector<std::size_t> idx(buf.transitions.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto g = minibatch_gradients(agent, buf, idx, cfg);
    const double h = 1e-6;
    auto rel = [](double a, double b) {
      // Floor keeps finite-difference roundoff on tiny entries out of the ratio.
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); i += (p.size() > 100 ? 13 : 1)) {
      Agent up = agent, down = agent;
      auto pu = p, pd = p;
      pu[i] += h;
      pd[i] -= h;
      up.actor.set_params(pu);
      down.actor.set_params(pd);
      const double fd = (total_loss(minibatch_gradients(up, buf, idx, cfg), cfg) -
                         total_loss(minibatch_gradients(down, buf, idx, cfg), cfg)) / (2 * h);
      worst = std::max(worst, rel(fd, g.actor[i]));
    }
    {
      Agent up = agent, down = agent;
      up.log_std += h;
      down.log_std -= h;
      const double fd = (total_loss(minibatch_gradients(up, buf, idx, cfg), cfg) -
                         total_loss(minibatch_gradients(down, buf, idx, cfg), cfg)) / (2 * h);
      worst = std::max(worst, rel(fd, g.log_std));
    }
    const auto c = std::vector<double>(agent.critic.params().begin(), agent.critic.params().end());
    for (std::size_t i = 0; i < c.size(); i += 37) {
      Agent up = agent, down = agent;
      auto cu = c, cd = c;
      cu[i] += h;
      cd[i] -= h;
      up.critic.set_params(cu);
      down.critic.set_params(cd);
      const double fd = (total_loss(minibatch_gradients(up, buf, idx, cfg), cfg) -
                         total_loss(minibatch_gradients(down, buf, idx, cfg), cfg)) / (2 * h);
      worst = std::max(worst, rel(fd, g.critic[i]));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero advantages leave the actor alone") {
  Rng init(1), sample(2), shuffle(3);
  TrainConfig cfg = short_train();
  Agent agent = make_agent({}, kGains, cfg, init);
  auto buf = collect_rollout(short_env(), 0, agent, {}, sample);
  compute_gae(buf, cfg.gamma, cfg.gae_lambda);
  std::fill(buf.advantages.begin(), buf.advantages.end(), 0.0);
  const auto before = agent.actor;
  ppo_update(agent, buf, cfg, shuffle);
  CHECK(agent.actor == before);
}

TEST_CASE("first pass over fresh data clips nothing") {
  Rng init(1), sample(2), shuffle(3);
  TrainConfig cfg = short_train();
  cfg.epochs_per_iter = 1;
  cfg.minibatch = short_env().steps_per_episode;
  Agent agent = make_agent({}, kGains, cfg, init);
  auto buf = collect_rollout(short_env(), 0, agent, {}, sample);
  compute_gae(buf, cfg.gamma, cfg.gae_lambda);
  CHECK(ppo_update(agent, buf, cfg, shuffle).clip_fraction == 0.0);
}

TEST_CASE("rollout rewards equal the offline metrics") {
  const spillsim::EnvConfig env;
  for (auto reward : {RewardConfig{RewardKind::kNegEma, 0.5}, RewardConfig{RewardKind::kNegEma, 0.1},
                      RewardConfig{RewardKind::kNegSum, 0.5}}) {
    Rng init(1), sample(2);
    Agent agent = make_agent({}, kGains, TrainConfig{}, init);
    const auto buf = collect_rollout(env, 4, agent, reward, sample);
    REQUIRE(buf.transitions.size() == env.steps_per_episode);
    const auto errors = metrics::abs_errors(buf.env.corrected_trace);
    const auto expected = reward.kind == RewardKind::kNegEma
                              ? metrics::ema_reward(errors, reward.alpha)
                              : metrics::sum_reward(errors, env.steps_per_episode);
    for (std::size_t t = 0; t < expected.size(); ++t) {
      CHECK(buf.transitions[t].reward == expected[t]);
    }
    CHECK(buf.transitions.back().done);
    CHECK_FALSE(buf.transitions.front().done);
  }
}

TEST_CASE("perfect regulation earns zero reward") {
  auto env = spillsim::zero_noise_config();
  env.action_bound = 1e-300;
  Rng init(1), sample(2);
  Agent agent = make_agent({}, kGains, TrainConfig{}, init);
  const auto buf = collect_rollout(env, 0, agent, {}, sample);
  for (const auto& tr : buf.transitions) CHECK(tr.reward == 0.0);
}

TEST_CASE("policy export round trip") {
  Rng init(1);
  Agent agent = make_agent({}, kGains, TrainConfig{}, init);
  const auto p = export_policy(agent);
  CHECK(p.weights == std::vector<double>{kGains.kp, kGains.ki, kGains.kd, 0.0});
  Agent copy = agent;
  import_policy(copy, p);
  CHECK(copy.actor == agent.actor);
}

TEST_CASE("training is deterministic and logs every iteration") {
  const auto env = short_env();
  TrainConfig cfg = short_train();
  cfg.seeds = {0, 1};
  cfg.seed_rotation_period = 2;
  const auto a = train(cfg, env, {}, {}, kGains);
  const auto b = train(cfg, env, {}, {}, kGains, 3);
  REQUIRE(a.curve.size() == cfg.iterations);
  CHECK(a.curve[0].seed == 0);
  CHECK(a.curve[2].seed == 1);
  CHECK(a.agent.actor == b.agent.actor);
  CHECK(a.agent.critic == b.agent.critic);
  CHECK(a.agent.log_std == b.agent.log_std);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].sdf_rl == b.curve[i].sdf_rl);
    CHECK(a.curve[i].mean_reward == b.curve[i].mean_reward);
  }
  CHECK(a.report.mean_sdf_rl == b.report.mean_sdf_rl);
  CHECK(training_seed(cfg, 5) == 0);
}

TEST_CASE("untrained agent reproduces the PID baseline") {
  TrainConfig cfg;
  cfg.iterations = 0;
  const auto r = train(cfg, spillsim::EnvConfig{}, {}, {}, kGains, 4);
  CHECK(r.curve.empty());
  REQUIRE(r.report.per_seed.size() == 9);
  for (const auto& s : r.report.per_seed) {
    CHECK(std::abs(s.sdf_rl - s.sdf_pid) <= 1e-9);
  }
}

TEST_CASE("evaluation is independent of the thread count") {
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  const auto policy = controllers::init_neural_pid(kGains, controllers::StateVariant::kPidAct);
  const auto one = evaluate(spillsim::EnvConfig{}, seeds, policy, kGains, 1);
  const auto many = evaluate(spillsim::EnvConfig{}, seeds, policy, kGains, 8);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(one.per_seed[i].seed == seeds[i]);
    CHECK(one.per_seed[i].sdf_rl == many.per_seed[i].sdf_rl);
  }
  CHECK(one.vs_noise_pct == many.vs_noise_pct);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.minibatch = 1000;
  CHECK_THROWS_AS(cfg.validate(430), ConfigError);
  RewardConfig r{RewardKind::kNegEma, 1.5};
  CHECK_THROWS_AS(r.validate(), ConfigError);
  CHECK(RewardConfig{}.label() == "-EMA (alpha=0.5)");
  CHECK(RewardConfig{RewardKind::kNegSum, 0.5}.label() == "-SUM");
}
