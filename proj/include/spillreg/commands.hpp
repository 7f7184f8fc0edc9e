#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spillreg/io.hpp"
#include "spillreg/ppo.hpp"

namespace spillreg::commands {

struct Context {
  io::RunConfig config;
  std::filesystem::path out_dir = "out";
  std::size_t threads = 1;
  std::string config_source = "<defaults>";
};

// Named configurations of the ablation grid ("main", "ema0.1", "ema0.9",
// "sum", "nn", "pid3", "cdover").
struct Variant {
  std::string name;
  ppo::RewardConfig reward;
  ppo::PolicyVariant policy;
};

const std::vector<Variant>& ablation_variants();
// Throws ConfigError for unknown names.
void apply_variant(io::RunConfig& config, const std::string& name);

// Worker cap from SPILLREG_THREADS, default 1.
std::size_t threads_from_env();

// Writes trace.csv for one episode on env seed `seed`: zero actuation, or the
// closed-loop PID (config.pid, tuned when absent) when `with_pid`.
spillsim::EnvState simulate(const Context& ctx, std::uint64_t seed, bool with_pid);

// Writes pid_gains.json.
controllers::TuneResult tune_pid(const Context& ctx);

struct TrainOutput {
  ppo::TrainResult result;
  controllers::PidGains baseline;
};

// Writes curve.csv, checkpoint.json, report.json and manifest.json. On a
// numeric divergence the last good checkpoint is still written and
// DivergenceError is rethrown.
TrainOutput train(const Context& ctx);

// Loads a checkpoint and writes report.json. The checkpoint's environment is
// used; `seeds` defaults to the context's training seeds.
ppo::RunReport evaluate(const Context& ctx,
                        const std::filesystem::path& checkpoint,
                        const std::optional<std::vector<std::uint64_t>>& seeds);

struct AblationRow {
  Variant variant;
  std::optional<ppo::RunReport> report;
  std::string error;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seed_schedule;  // training seed per iteration
  controllers::PidGains baseline;
};

// Trains every ablation variant from the shared context (same seeds, master
// seed and PID baseline) and writes ablation.csv / ablation.json. A failing
// row is recorded and the remaining rows still run.
AblationResult ablate(const Context& ctx);

std::string ablation_csv(const AblationResult& result);

// Writes plot.gp, a gnuplot script over curve.csv and trace.csv.
void plot_script(const Context& ctx);

}  // namespace spillreg::commands
