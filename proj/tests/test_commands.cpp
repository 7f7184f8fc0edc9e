#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spillreg/commands.hpp"
#include "spillreg/errors.hpp"
#include "spillreg/metrics.hpp"

using namespace spillreg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("spillreg_cmd_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s, char skip = '\0') {
  std::size_t n = 0;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != skip) ++n;
  }
  return n;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SPILLREG_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

commands::Context small_context(const fs::path& out) {
  commands::Context ctx;
  ctx.out_dir = out;
  ctx.config.pid = controllers::PidGains{0.5, 0.25, 0.0, 1e-4};
  ctx.config.train.iterations = 1;
  return ctx;
}

}  // namespace

TEST_CASE("simulate writes deterministic traces") {
  commands::Context ctx;
  ctx.out_dir = temp_dir("sim");
  ctx.config.env = spillsim::zero_noise_config();
  const auto flat = commands::simulate(ctx, 0, false);
  for (double x : flat.corrected_trace) CHECK(x == 1.0);

  ctx.config.env = spillsim::EnvConfig{};
  const auto a = commands::simulate(ctx, 4, false);
  const std::string first = slurp(ctx.out_dir / "trace.csv");
  commands::simulate(ctx, 4, false);
  CHECK(slurp(ctx.out_dir / "trace.csv") == first);
  CHECK(count_lines(first) == 431);
  CHECK(metrics::sdf(a.raw_trace).sdf < 0.6);
  CHECK(fs::exists(ctx.out_dir / "manifest.json"));
}

TEST_CASE("single-iteration training and evaluation") {
  const auto out = temp_dir("train");
  auto ctx = small_context(out);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = commands::train(ctx);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
  CHECK(r.result.curve.size() == 1);
  CHECK(count_lines(slurp(out / "curve.csv")) == 2);
  for (const char* f : {"checkpoint.json", "report.json", "manifest.json"}) {
    CHECK(fs::exists(out / f));
  }
  const auto report = commands::evaluate(ctx, out / "checkpoint.json", std::nullopt);
  CHECK(report.mean_sdf_rl == doctest::Approx(r.result.report.mean_sdf_rl).epsilon(1e-12));
}

TEST_CASE("an untrained checkpoint evaluates like the PID") {
  const auto out = temp_dir("zero");
  auto ctx = small_context(out);
  ctx.config.train.iterations = 0;
  commands::train(ctx);
  const auto report = commands::evaluate(ctx, out / "checkpoint.json", std::nullopt);
  for (const auto& s : report.per_seed) CHECK(std::abs(s.sdf_rl - s.sdf_pid) <= 1e-9);
}

TEST_CASE("ablation grid shares one schedule") {
  const auto out = temp_dir("ablate");
  auto ctx = small_context(out);
  ctx.config.train.iterations = 2;
  ctx.threads = 4;
  const auto result = commands::ablate(ctx);
  REQUIRE(result.rows.size() == 7);
  for (const auto& row : result.rows) CHECK(row.report.has_value());
  CHECK(result.seed_schedule == std::vector<std::uint64_t>{0, 0});
  const std::string csv = slurp(out / "ablation.csv");
  CHECK(csv.find("vs_pid,vs_noise,policy,reward,algo,state") != std::string::npos);
  CHECK(count_lines(csv, '#') == 8);
  CHECK(csv.find("# mean over 7") != std::string::npos);
  const auto manifest = io::read_json(out / "manifest.json");
  CHECK(manifest["shared_seed_schedule"] == true);
}

TEST_CASE("variant names") {
  io::RunConfig c;
  commands::apply_variant(c, "cdover");
  CHECK(c.variant.state == controllers::StateVariant::kCdOver);
  commands::apply_variant(c, "sum");
  CHECK(c.reward.kind == ppo::RewardKind::kNegSum);
  CHECK_THROWS_AS(commands::apply_variant(c, "sac"), ConfigError);
}

TEST_CASE("cli exit codes") {
  const auto dir = temp_dir("cli");
  std::ofstream(dir / "bad.json") << R"({"env": {"ou_rho": 2.0}})";
  std::ofstream(dir / "unknown.json") << R"({"nope": 1})";
  std::ofstream(dir / "blocker") << "x";
  const std::string out = " --out " + (dir / "o").string();
  CHECK(run_cli("simulate" + out) == 0);
  CHECK(run_cli("simulate --config " + (dir / "bad.json").string() + out) == 2);
  CHECK(run_cli("simulate --config " + (dir / "unknown.json").string() + out) == 2);
  CHECK(run_cli("simulate --config " + (dir / "missing.json").string() + out) == 4);
  CHECK(run_cli("simulate --out " + (dir / "blocker" / "o").string()) == 4);
  CHECK(run_cli("train --variant sac" + out) == 2);
  CHECK(run_cli("frobnicate") != 0);
}

TEST_CASE("rerunning from a manifest reproduces the outputs") {
  const auto dir = temp_dir("rerun");
  const std::string base = " --iterations 2 --seed 5";
  REQUIRE(run_cli("train" + base + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("train --config " + (dir / "a" / "manifest.json").string() + " --out " +
                  (dir / "b").string()) == 0);
  for (const char* f : {"curve.csv", "checkpoint.json", "report.json"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const auto m = io::read_json(dir / "b" / "manifest.json");
  CHECK(m["master_seed"] == 5);
}
