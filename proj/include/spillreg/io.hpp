#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spillreg/controllers.hpp"
#include "spillreg/gradnet.hpp"
#include "spillreg/ppo.hpp"
#include "spillreg/spillsim.hpp"

namespace spillreg::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

// Everything a command needs besides its output location.
struct RunConfig {
  spillsim::EnvConfig env;
  ppo::TrainConfig train;
  ppo::RewardConfig reward;
  ppo::PolicyVariant variant;
  std::optional<controllers::PidGains> pid;  // tuned on demand when absent
  controllers::GainGrid grid = controllers::GainGrid::defaults();
};

json to_json(const spillsim::EnvConfig& c);
json to_json(const ppo::TrainConfig& c);
json to_json(const ppo::RewardConfig& c);
json to_json(const ppo::PolicyVariant& v);
json to_json(const controllers::GainGrid& g);
json to_json(const RunConfig& c);

// Overlays the fields present in `j` onto `base`; unknown keys are errors.
spillsim::EnvConfig env_config_from_json(const json& j, spillsim::EnvConfig base = {});
ppo::TrainConfig train_config_from_json(const json& j, ppo::TrainConfig base = {});
ppo::RewardConfig reward_config_from_json(const json& j, ppo::RewardConfig base = {});
ppo::PolicyVariant variant_from_json(const json& j, ppo::PolicyVariant base = {});
RunConfig run_config_from_json(const json& j, RunConfig base = {});

// Flat versioned objects.
json to_json(const controllers::PidGains& g);
controllers::PidGains pid_gains_from_json(const json& j);

json to_json(const gradnet::DenseNet& net);
gradnet::DenseNet dense_net_from_json(const json& j);

json to_json(const gradnet::AdamState& s);
gradnet::AdamState adam_state_from_json(const json& j);

json to_json(const controllers::PolicyParams& p);
controllers::PolicyParams policy_from_json(const json& j);

struct Checkpoint {
  ppo::Agent agent;
  controllers::PidGains baseline;
  RunConfig config;
};

json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const json& j);

json to_json(const ppo::RunReport& r);

// Checks the `format` and `version` tags; throws VersionError on mismatch.
void check_format(const json& j, const std::string& format);

json read_json(const std::filesystem::path& path);
// Pretty-printed with a trailing newline. Throws IoError with the path.
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string curve_csv(const std::vector<ppo::CurveRow>& rows);

}  // namespace spillreg::io
