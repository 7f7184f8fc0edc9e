// spillreg: simulate spills, tune the PID baseline, train and evaluate the
// PPO spill regulator, and run the ablation grid.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spillreg/commands.hpp"
#include "spillreg/errors.hpp"

namespace {

using namespace spillreg;

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string variant;
  std::optional<std::size_t> iterations;
  std::vector<std::uint64_t> seeds;
  std::string checkpoint;
  bool with_pid = false;
};

// Built-in defaults < config file (or a run manifest) < command-line flags.
commands::Context resolve(const Flags& flags, bool seed_is_master) {
  commands::Context ctx;
  if (!flags.config_path.empty()) {
    io::json j = io::read_json(flags.config_path);
    if (j.contains("format") && j.at("format") == "spillreg.manifest") {
      io::check_format(j, "spillreg.manifest");
      j = j.at("config");
    }
    ctx.config = io::run_config_from_json(j);
    ctx.config_source = flags.config_path;
  }
  if (!flags.variant.empty()) commands::apply_variant(ctx.config, flags.variant);
  if (flags.seed && seed_is_master) ctx.config.train.master_seed = *flags.seed;
  if (flags.iterations) ctx.config.train.iterations = *flags.iterations;
  if (!flags.seeds.empty()) ctx.config.train.seeds = flags.seeds;
  ctx.out_dir = flags.out_dir;
  ctx.threads = commands::threads_from_env();
  ctx.config.env.validate();
  ctx.config.reward.validate();
  ctx.config.train.validate(ctx.config.env.steps_per_episode);
  return ctx;
}

void print_report(const ppo::RunReport& r) {
  std::cout << "seed  sdf_noise  sdf_pid  sdf_rl  vs_pid%  vs_noise%\n";
  for (const auto& s : r.per_seed) {
    std::printf("%4llu  %9.4f  %7.4f  %6.4f  %7.3f  %9.3f\n",
                static_cast<unsigned long long>(s.seed), s.sdf_noise, s.sdf_pid,
                s.sdf_rl, s.vs_pid_pct, s.vs_noise_pct);
  }
  std::printf("mean  %9.4f  %7.4f  %6.4f  %7.3f  %9.3f\n", r.mean_sdf_noise,
              r.mean_sdf_pid, r.mean_sdf_rl, r.vs_pid_pct, r.vs_noise_pct);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spill regulation with a PPO-trained neuralized PID policy"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path,
                    "JSON config (env/train/reward/variant/pid/grid) or run manifest");
    sub->add_option("--out", flags.out_dir, "output directory")->capture_default_str();
    sub->add_option("--variant", flags.variant,
                    "main, ema0.1, ema0.9, sum, nn, pid3 or cdover");
    sub->add_option("--seeds", flags.seeds, "evaluation/tuning seeds")->delimiter(',');
  };

  auto* simulate = app.add_subcommand("simulate", "emit one spill trace as CSV");
  add_common(simulate);
  simulate->add_option("--seed", flags.seed, "environment seed (default 0)");
  simulate->add_flag("--with-pid", flags.with_pid, "close the loop with the PID baseline");

  auto* tune = app.add_subcommand("tune-pid", "grid-tune the PID baseline");
  add_common(tune);

  auto* train = app.add_subcommand("train", "train the PPO policy");
  add_common(train);
  train->add_option("--seed", flags.seed, "master seed");
  train->add_option("--iterations", flags.iterations, "training iterations");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", flags.checkpoint, "checkpoint.json")->required();

  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  add_common(ablate);
  ablate->add_option("--seed", flags.seed, "master seed");
  ablate->add_option("--iterations", flags.iterations,
                     "training iterations per row (150 for a quick run)");

  auto* plot = app.add_subcommand("plot-script", "write a gnuplot script");
  add_common(plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      auto ctx = resolve(flags, false);
      const auto state = commands::simulate(ctx, flags.seed.value_or(0), flags.with_pid);
      std::cout << "wrote " << (ctx.out_dir / "trace.csv").string() << " ("
                << state.t << " steps)\n";
    } else if (tune->parsed()) {
      auto ctx = resolve(flags, false);
      const auto r = commands::tune_pid(ctx);
      std::printf("kp=%.9g ki=%.9g kd=%.9g mean SDF %.4f\n", r.gains.kp, r.gains.ki,
                  r.gains.kd, r.mean_sdf);
    } else if (train->parsed()) {
      auto ctx = resolve(flags, true);
      const auto out = commands::train(ctx);
      print_report(out.result.report);
    } else if (evaluate->parsed()) {
      auto ctx = resolve(flags, false);
      std::optional<std::vector<std::uint64_t>> seeds;
      if (!flags.seeds.empty()) seeds = flags.seeds;
      print_report(commands::evaluate(ctx, flags.checkpoint, seeds));
    } else if (ablate->parsed()) {
      auto ctx = resolve(flags, true);
      const auto result = commands::ablate(ctx);
      std::cout << commands::ablation_csv(result);
      for (const auto& row : result.rows) {
        if (!row.error.empty()) {
          std::cerr << "row " << row.variant.name << " failed: " << row.error << '\n';
        }
      }
    } else if (plot->parsed()) {
      auto ctx = resolve(flags, false);
      commands::plot_script(ctx);
      std::cout << "wrote " << (ctx.out_dir / "plot.gp").string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const VersionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
