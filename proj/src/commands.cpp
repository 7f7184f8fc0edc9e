#include "spillreg/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include "spillreg/errors.hpp"
#include "spillreg/metrics.hpp"

namespace spillreg::commands {

namespace {

using io::json;
using controllers::PolicyKind;
using controllers::StateVariant;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_manifest(const Context& ctx, const std::string& command,
                    const io::RunConfig& resolved, const json& outputs,
                    json extra = json::object()) {
  json j{{"format", "spillreg.manifest"},
         {"version", io::kFormatVersion},
         {"command", command},
         {"tool_version", io::kToolVersion},
         {"timestamp", utc_timestamp()},
         {"config_source", ctx.config_source},
         {"master_seed", resolved.train.master_seed},
         {"config", io::to_json(resolved)},
         {"outputs", outputs}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  io::write_json(ctx.out_dir / "manifest.json", j);
}

controllers::PidGains resolve_baseline(const io::RunConfig& config) {
  if (config.pid) return *config.pid;
  return controllers::tune_pid(config.env, config.train.seeds, config.grid).gains;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const std::vector<Variant>& ablation_variants() {
  using ppo::RewardConfig;
  using ppo::RewardKind;
  static const std::vector<Variant> variants{
      {"ema0.1", RewardConfig{RewardKind::kNegEma, 0.1},
       {PolicyKind::kNeuralPid, StateVariant::kPidAct}},
      {"nn", RewardConfig{RewardKind::kNegEma, 0.5},
       {PolicyKind::kMlp, StateVariant::kPidAct}},
      {"ema0.9", RewardConfig{RewardKind::kNegEma, 0.9},
       {PolicyKind::kNeuralPid, StateVariant::kPidAct}},
      {"sum", RewardConfig{RewardKind::kNegSum, 0.5},
       {PolicyKind::kNeuralPid, StateVariant::kPidAct}},
      {"pid3", RewardConfig{RewardKind::kNegEma, 0.5},
       {PolicyKind::kNeuralPid, StateVariant::kPid3}},
      {"cdover", RewardConfig{RewardKind::kNegEma, 0.5},
       {PolicyKind::kNeuralPid, StateVariant::kCdOver}},
      {"main", RewardConfig{RewardKind::kNegEma, 0.5},
       {PolicyKind::kNeuralPid, StateVariant::kPidAct}},
  };
  return variants;
}

void apply_variant(io::RunConfig& config, const std::string& name) {
  for (const auto& v : ablation_variants()) {
    if (v.name == name) {
      config.reward = v.reward;
      config.variant = v.policy;
      return;
    }
  }
  throw ConfigError("variant", "unknown variant '" + name + "'");
}

std::size_t threads_from_env() {
  const char* value = std::getenv("SPILLREG_THREADS");
  if (value == nullptr || *value == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(value, &end, 10);
  if (*end != '\0' || n < 1) {
    throw ConfigError("SPILLREG_THREADS", "must be a positive integer");
  }
  return static_cast<std::size_t>(n);
}

spillsim::EnvState simulate(const Context& ctx, std::uint64_t seed, bool with_pid) {
  io::RunConfig resolved = ctx.config;
  spillsim::EnvState state;
  if (with_pid) {
    resolved.pid = resolve_baseline(resolved);
    state = controllers::run_pid_episode(resolved.env, seed, *resolved.pid);
  } else {
    resolved.env.validate();
    state = spillsim::reset(resolved.env, seed);
    while (!spillsim::step(state, resolved.env, 0.0).done) {
    }
  }
  std::ostringstream csv;
  spillsim::write_trace_csv(csv, state);
  io::write_text(ctx.out_dir / "trace.csv", csv.str());
  write_manifest(ctx, "simulate", resolved, {{"trace", "trace.csv"}},
                 {{"env_seed", seed}, {"with_pid", with_pid}});
  return state;
}

controllers::TuneResult tune_pid(const Context& ctx) {
  const auto result =
      controllers::tune_pid(ctx.config.env, ctx.config.train.seeds, ctx.config.grid);
  json j = io::to_json(result.gains);
  j["mean_sdf"] = result.mean_sdf;
  j["manifest"] = "manifest.json";
  io::write_json(ctx.out_dir / "pid_gains.json", j);
  io::RunConfig resolved = ctx.config;
  resolved.pid = result.gains;
  write_manifest(ctx, "tune-pid", resolved, {{"gains", "pid_gains.json"}});
  return result;
}

TrainOutput train(const Context& ctx) {
  io::RunConfig resolved = ctx.config;
  TrainOutput out;
  out.baseline = resolve_baseline(resolved);
  resolved.pid = out.baseline;
  out.result = ppo::train(resolved.train, resolved.env, resolved.reward,
                          resolved.variant, out.baseline, ctx.threads);

  io::write_text(ctx.out_dir / "curve.csv", io::curve_csv(out.result.curve));
  io::Checkpoint checkpoint{out.result.agent, out.baseline, resolved};
  json cj = io::to_json(checkpoint);
  io::write_json(ctx.out_dir / "checkpoint.json", cj);
  json report = io::to_json(out.result.report);
  report["manifest"] = "manifest.json";
  io::write_json(ctx.out_dir / "report.json", report);
  json extra{{"seed_schedule_period", resolved.train.seed_rotation_period}};
  if (out.result.divergence) extra["divergence"] = *out.result.divergence;
  write_manifest(ctx, "train", resolved,
                 {{"curve", "curve.csv"},
                  {"checkpoint", "checkpoint.json"},
                  {"report", "report.json"}},
                 extra);
  if (out.result.divergence) {
    throw DivergenceError(out.result.agent.actor_opt.step, *out.result.divergence);
  }
  return out;
}

ppo::RunReport evaluate(const Context& ctx, const std::filesystem::path& checkpoint,
                        const std::optional<std::vector<std::uint64_t>>& seeds) {
  const io::Checkpoint cp = io::checkpoint_from_json(io::read_json(checkpoint));
  const std::vector<std::uint64_t> eval_seeds = seeds.value_or(ctx.config.train.seeds);
  const auto report = ppo::evaluate(cp.config.env, eval_seeds,
                                    ppo::export_policy(cp.agent), cp.baseline,
                                    ctx.threads);
  json j = io::to_json(report);
  j["checkpoint"] = checkpoint.string();
  j["manifest"] = "manifest.json";
  io::write_json(ctx.out_dir / "report.json", j);
  write_manifest(ctx, "evaluate", cp.config, {{"report", "report.json"}},
                 {{"checkpoint", checkpoint.string()}, {"seeds", eval_seeds}});
  return report;
}

AblationResult ablate(const Context& ctx) {
  io::RunConfig shared = ctx.config;
  AblationResult result;
  result.baseline = resolve_baseline(shared);
  shared.pid = result.baseline;
  for (std::size_t it = 0; it < shared.train.iterations; ++it) {
    result.seed_schedule.push_back(ppo::training_seed(shared.train, it));
  }

  const auto& variants = ablation_variants();
  result.rows.resize(variants.size());
  auto run_row = [&](std::size_t i) {
    AblationRow& row = result.rows[i];
    row.variant = variants[i];
    try {
      auto r = ppo::train(shared.train, shared.env, variants[i].reward,
                          variants[i].policy, result.baseline, 1);
      if (r.divergence) {
        row.error = *r.divergence;
      } else {
        row.report = std::move(r.report);
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(ctx.threads, 1, variants.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < variants.size(); ++i) run_row(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < variants.size(); i += workers) run_row(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  io::write_text(ctx.out_dir / "ablation.csv", ablation_csv(result));
  json rows = json::array();
  for (const auto& row : result.rows) {
    json r{{"name", row.variant.name},
           {"policy", controllers::to_string(row.variant.policy.policy)},
           {"reward", row.variant.reward.label()},
           {"algo", "PPO"},
           {"state", controllers::to_string(row.variant.policy.state)}};
    if (row.report) {
      r["vs_pid"] = row.report->vs_pid_pct;
      r["vs_noise"] = row.report->vs_noise_pct;
      r["report"] = io::to_json(*row.report);
    } else {
      r["error"] = row.error;
    }
    rows.push_back(r);
  }
  io::write_json(ctx.out_dir / "ablation.json",
                 {{"format", "spillreg.ablation"},
                  {"version", io::kFormatVersion},
                  {"manifest", "manifest.json"},
                  {"note", "SAC comparison row not run (out of scope)"},
                  {"seed_schedule", result.seed_schedule},
                  {"rows", rows}});
  write_manifest(ctx, "ablate", shared,
                 {{"table", "ablation.csv"}, {"rows", "ablation.json"}},
                 {{"seed_schedule", result.seed_schedule},
                  {"shared_seed_schedule", true}});
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "# " << result.rows.size()
     << " PPO variants on a shared seed schedule; the SAC comparison row is not run\n";
  os << "vs_pid,vs_noise,policy,reward,algo,state\n";
  double sum_pid = 0.0, sum_noise = 0.0;
  std::size_t ok = 0;
  for (const auto& row : result.rows) {
    if (row.report) {
      os << row.report->vs_pid_pct << ',' << row.report->vs_noise_pct;
      sum_pid += row.report->vs_pid_pct;
      sum_noise += row.report->vs_noise_pct;
      ++ok;
    } else {
      os << "nan,nan";
    }
    os << ',' << controllers::to_string(row.variant.policy.policy) << ','
       << csv_quote(row.variant.reward.label()) << ",PPO,"
       << csv_quote(controllers::to_string(row.variant.policy.state)) << '\n';
  }
  os << "# mean over " << ok << " completed rows: vs_pid="
     << (ok ? sum_pid / static_cast<double>(ok) : 0.0)
     << " vs_noise=" << (ok ? sum_noise / static_cast<double>(ok) : 0.0) << '\n';
  return os.str();
}

void plot_script(const Context& ctx) {
  const std::string script = R"(# gnuplot script for spillreg outputs: gnuplot -persist plot.gp
set datafile separator ','
set key autotitle columnhead
set multiplot layout 2,1

set title 'SDF during training'
set xlabel 'iteration'
set ylabel 'SDF'
plot 'curve.csv' using 1:4 with lines title 'RL', \
     '' using 1:5 with lines title 'PID', \
     '' using 1:6 with lines title 'unregulated'

set title 'Spill rate'
set xlabel 'step'
set ylabel 'rate'
plot 'trace.csv' using 1:2 with lines title 'raw', \
     '' using 1:3 with lines title 'corrected'

unset multiplot
)";
  io::write_text(ctx.out_dir / "plot.gp", script);
}

}  // namespace spillreg::commands
