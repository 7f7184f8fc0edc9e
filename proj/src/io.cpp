#include "spillreg/io.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "spillreg/errors.hpp"

namespace spillreg::io {

namespace {

template <typename T>
void read_field(const json& j, const std::string& section, const char* key,
                T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key, e.what());
  }
}

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(section, "must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(section + "." + key, "unknown key");
  }
}

std::vector<std::string> weight_names(controllers::StateVariant v) {
  switch (v) {
    case controllers::StateVariant::kPid3:
      return {"kp", "ki", "kd"};
    case controllers::StateVariant::kCdOver:
      return {"w_cd", "w_over1", "w_p", "w_act"};
    case controllers::StateVariant::kPidAct:
      break;
  }
  return {"kp", "ki", "kd", "action_weight"};
}

json tagged(const std::string& format) {
  return json{{"format", format}, {"version", kFormatVersion}};
}

}  // namespace

void check_format(const json& j, const std::string& format) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != format) {
    throw VersionError("expected a '" + format + "' document");
  }
  if (!j.contains("version") || j.at("version") != kFormatVersion) {
    throw VersionError("'" + format + "' version " +
                       (j.contains("version") ? j.at("version").dump() : "<missing>") +
                       " is not supported (expected " +
                       std::to_string(kFormatVersion) + ")");
  }
}

json to_json(const spillsim::EnvConfig& c) {
  return {{"steps_per_episode", c.steps_per_episode},
          {"dt", c.dt},
          {"reference", c.reference},
          {"ripple_amps", c.ripple_amps},
          {"ripple_freqs", c.ripple_freqs},
          {"ou_rho", c.ou_rho},
          {"ou_sigma", c.ou_sigma},
          {"clamp_lo", c.clamp_lo},
          {"clamp_hi", c.clamp_hi},
          {"action_bound", c.action_bound}};
}

spillsim::EnvConfig env_config_from_json(const json& j, spillsim::EnvConfig c) {
  const std::string s = "env";
  reject_unknown(j, s, {"steps_per_episode", "dt", "reference", "ripple_amps",
                        "ripple_freqs", "ou_rho", "ou_sigma", "clamp_lo",
                        "clamp_hi", "action_bound"});
  if (j.contains("steps_per_episode")) read_field(j, s, "steps_per_episode", c.steps_per_episode);
  if (j.contains("dt")) read_field(j, s, "dt", c.dt);
  if (j.contains("reference")) read_field(j, s, "reference", c.reference);
  if (j.contains("ripple_amps")) read_field(j, s, "ripple_amps", c.ripple_amps);
  if (j.contains("ripple_freqs")) read_field(j, s, "ripple_freqs", c.ripple_freqs);
  if (j.contains("ou_rho")) read_field(j, s, "ou_rho", c.ou_rho);
  if (j.contains("ou_sigma")) read_field(j, s, "ou_sigma", c.ou_sigma);
  if (j.contains("clamp_lo")) read_field(j, s, "clamp_lo", c.clamp_lo);
  if (j.contains("clamp_hi")) read_field(j, s, "clamp_hi", c.clamp_hi);
  if (j.contains("action_bound")) read_field(j, s, "action_bound", c.action_bound);
  c.validate();
  return c;
}

json to_json(const ppo::TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_eps", c.clip_eps},
          {"epochs_per_iter", c.epochs_per_iter},
          {"minibatch", c.minibatch},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"lr", c.lr},
          {"iterations", c.iterations},
          {"seed_rotation_period", c.seed_rotation_period},
          {"seeds", c.seeds},
          {"master_seed", c.master_seed},
          {"optimizer", c.optimizer == gradnet::OptimizerKind::kSgd ? "sgd" : "adam"}};
}

ppo::TrainConfig train_config_from_json(const json& j, ppo::TrainConfig c) {
  const std::string s = "train";
  reject_unknown(j, s, {"gamma", "gae_lambda", "clip_eps", "epochs_per_iter",
                        "minibatch", "value_coef", "entropy_coef", "lr",
                        "iterations", "seed_rotation_period", "seeds",
                        "master_seed", "optimizer"});
  if (j.contains("gamma")) read_field(j, s, "gamma", c.gamma);
  if (j.contains("gae_lambda")) read_field(j, s, "gae_lambda", c.gae_lambda);
  if (j.contains("clip_eps")) read_field(j, s, "clip_eps", c.clip_eps);
  if (j.contains("epochs_per_iter")) read_field(j, s, "epochs_per_iter", c.epochs_per_iter);
  if (j.contains("minibatch")) read_field(j, s, "minibatch", c.minibatch);
  if (j.contains("value_coef")) read_field(j, s, "value_coef", c.value_coef);
  if (j.contains("entropy_coef")) read_field(j, s, "entropy_coef", c.entropy_coef);
  if (j.contains("lr")) read_field(j, s, "lr", c.lr);
  if (j.contains("iterations")) read_field(j, s, "iterations", c.iterations);
  if (j.contains("seed_rotation_period")) {
    read_field(j, s, "seed_rotation_period", c.seed_rotation_period);
  }
  if (j.contains("seeds")) read_field(j, s, "seeds", c.seeds);
  if (j.contains("master_seed")) read_field(j, s, "master_seed", c.master_seed);
  if (j.contains("optimizer")) {
    std::string name;
    read_field(j, s, "optimizer", name);
    if (name == "adam") {
      c.optimizer = gradnet::OptimizerKind::kAdam;
    } else if (name == "sgd") {
      c.optimizer = gradnet::OptimizerKind::kSgd;
    } else {
      throw ConfigError("train.optimizer", "expected 'adam' or 'sgd'");
    }
  }
  return c;
}

json to_json(const ppo::RewardConfig& c) {
  return {{"kind", c.kind == ppo::RewardKind::kNegSum ? "neg_sum" : "neg_ema"},
          {"alpha", c.alpha}};
}

ppo::RewardConfig reward_config_from_json(const json& j, ppo::RewardConfig c) {
  const std::string s = "reward";
  reject_unknown(j, s, {"kind", "alpha"});
  if (j.contains("kind")) {
    std::string name;
    read_field(j, s, "kind", name);
    if (name == "neg_ema") {
      c.kind = ppo::RewardKind::kNegEma;
    } else if (name == "neg_sum") {
      c.kind = ppo::RewardKind::kNegSum;
    } else {
      throw ConfigError("reward.kind", "expected 'neg_ema' or 'neg_sum'");
    }
  }
  if (j.contains("alpha")) read_field(j, s, "alpha", c.alpha);
  c.validate();
  return c;
}

json to_json(const ppo::PolicyVariant& v) {
  return {{"policy", controllers::to_string(v.policy)},
          {"state", controllers::to_string(v.state)}};
}

ppo::PolicyVariant variant_from_json(const json& j, ppo::PolicyVariant v) {
  const std::string s = "variant";
  reject_unknown(j, s, {"policy", "state"});
  try {
    if (j.contains("policy")) {
      v.policy = controllers::policy_kind_from_string(j.at("policy").get<std::string>());
    }
    if (j.contains("state")) {
      v.state = controllers::state_variant_from_string(j.at("state").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError("variant", e.what());
  } catch (const InputError& e) {
    throw ConfigError("variant", e.what());
  }
  return v;
}

json to_json(const controllers::GainGrid& g) {
  return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}};
}

json to_json(const RunConfig& c) {
  json j{{"env", to_json(c.env)},
         {"train", to_json(c.train)},
         {"reward", to_json(c.reward)},
         {"variant", to_json(c.variant)},
         {"grid", to_json(c.grid)}};
  if (c.pid) j["pid"] = to_json(*c.pid);
  return j;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  reject_unknown(j, "config", {"env", "train", "reward", "variant", "pid", "grid"});
  if (j.contains("env")) c.env = env_config_from_json(j.at("env"), c.env);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("reward")) c.reward = reward_config_from_json(j.at("reward"), c.reward);
  if (j.contains("variant")) c.variant = variant_from_json(j.at("variant"), c.variant);
  if (j.contains("pid")) {
    try {
      c.pid = pid_gains_from_json(j.at("pid"));
    } catch (const Error& e) {
      throw ConfigError("pid", e.what());
    }
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    reject_unknown(g, "grid", {"kp", "ki", "kd"});
    if (g.contains("kp")) read_field(g, "grid", "kp", c.grid.kp);
    if (g.contains("ki")) read_field(g, "grid", "ki", c.grid.ki);
    if (g.contains("kd")) read_field(g, "grid", "kd", c.grid.kd);
  }
  return c;
}

json to_json(const controllers::PidGains& g) {
  json j = tagged("spillreg.pid_gains");
  j["kp"] = g.kp;
  j["ki"] = g.ki;
  j["kd"] = g.kd;
  j["dt"] = g.dt;
  return j;
}

controllers::PidGains pid_gains_from_json(const json& j) {
  check_format(j, "spillreg.pid_gains");
  controllers::PidGains g;
  try {
    g.kp = j.at("kp").get<double>();
    g.ki = j.at("ki").get<double>();
    g.kd = j.at("kd").get<double>();
    g.dt = j.at("dt").get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed PID gains: ") + e.what());
  }
  g.validate();
  return g;
}

json to_json(const gradnet::DenseNet& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in}, {"out", l.out},
                      {"activation", gradnet::to_string(l.activation)}});
  }
  const auto p = net.params();
  return {{"layers", layers}, {"params", std::vector<double>(p.begin(), p.end())}};
}

gradnet::DenseNet dense_net_from_json(const json& j) {
  try {
    std::vector<gradnet::LayerShape> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                        gradnet::activation_from_string(l.at("activation").get<std::string>())});
    }
    gradnet::DenseNet net(std::move(layers));
    net.set_params(j.at("params").get<std::vector<double>>());
    return net;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed network: ") + e.what());
  }
}

json to_json(const gradnet::AdamState& s) {
  return {{"kind", s.kind == gradnet::OptimizerKind::kSgd ? "sgd" : "adam"},
          {"lr", s.lr},
          {"beta1", s.beta1},
          {"beta2", s.beta2},
          {"eps", s.eps},
          {"step", s.step},
          {"m", s.m},
          {"v", s.v}};
}

gradnet::AdamState adam_state_from_json(const json& j) {
  try {
    gradnet::AdamState s;
    s.kind = j.at("kind") == "sgd" ? gradnet::OptimizerKind::kSgd
                                   : gradnet::OptimizerKind::kAdam;
    s.lr = j.at("lr").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    s.step = j.at("step").get<std::size_t>();
    s.m = j.at("m").get<std::vector<double>>();
    s.v = j.at("v").get<std::vector<double>>();
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed optimizer state: ") + e.what());
  }
}

json to_json(const controllers::PolicyParams& p) {
  json j = tagged("spillreg.policy");
  j["policy"] = controllers::to_string(p.kind);
  j["state"] = controllers::to_string(p.variant);
  if (p.kind == controllers::PolicyKind::kNeuralPid) {
    const auto names = weight_names(p.variant);
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = p.weights[i];
    j["bias"] = p.bias;
  } else {
    j["network"] = to_json(p.network);
  }
  j["log_std"] = p.log_std;
  j["feature_scale"] = p.feature_scale;
  return j;
}

controllers::PolicyParams policy_from_json(const json& j) {
  check_format(j, "spillreg.policy");
  controllers::PolicyParams p;
  try {
    p.kind = controllers::policy_kind_from_string(j.at("policy").get<std::string>());
    p.variant = controllers::state_variant_from_string(j.at("state").get<std::string>());
    if (p.kind == controllers::PolicyKind::kNeuralPid) {
      for (const auto& name : weight_names(p.variant)) {
        p.weights.push_back(j.at(name).get<double>());
      }
      p.bias = j.at("bias").get<double>();
    } else {
      p.network = dense_net_from_json(j.at("network"));
    }
    p.log_std = j.at("log_std").get<double>();
    p.feature_scale = j.at("feature_scale").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed policy: ") + e.what());
  }
  p.validate();
  return p;
}

json to_json(const Checkpoint& c) {
  json j = tagged("spillreg.checkpoint");
  j["iteration"] = c.agent.iteration;
  j["policy"] = to_json(ppo::export_policy(c.agent));
  j["actor"] = to_json(c.agent.actor);
  j["critic"] = to_json(c.agent.critic);
  j["optimizer"] = {{"actor", to_json(c.agent.actor_opt)},
                    {"log_std", to_json(c.agent.log_std_opt)},
                    {"critic", to_json(c.agent.critic_opt)}};
  j["baseline_pid"] = to_json(c.baseline);
  j["config"] = to_json(c.config);
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  check_format(j, "spillreg.checkpoint");
  Checkpoint c;
  try {
    c.config = run_config_from_json(j.at("config"));
    ppo::import_policy(c.agent, policy_from_json(j.at("policy")));
    c.agent.actor = dense_net_from_json(j.at("actor"));
    c.agent.critic = dense_net_from_json(j.at("critic"));
    c.agent.actor_opt = adam_state_from_json(j.at("optimizer").at("actor"));
    c.agent.log_std_opt = adam_state_from_json(j.at("optimizer").at("log_std"));
    c.agent.critic_opt = adam_state_from_json(j.at("optimizer").at("critic"));
    c.agent.iteration = j.at("iteration").get<std::size_t>();
    c.baseline = pid_gains_from_json(j.at("baseline_pid"));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

json to_json(const ppo::RunReport& r) {
  json seeds = json::array();
  for (const auto& s : r.per_seed) {
    seeds.push_back({{"seed", s.seed},
                     {"sdf_noise", s.sdf_noise},
                     {"sdf_pid", s.sdf_pid},
                     {"sdf_rl", s.sdf_rl},
                     {"vs_pid_pct", s.vs_pid_pct},
                     {"vs_noise_pct", s.vs_noise_pct}});
  }
  json j = tagged("spillreg.report");
  j["per_seed"] = seeds;
  j["mean"] = {{"sdf_noise", r.mean_sdf_noise},
               {"sdf_pid", r.mean_sdf_pid},
               {"sdf_rl", r.mean_sdf_rl},
               {"vs_pid_pct", r.vs_pid_pct},
               {"vs_noise_pct", r.vs_noise_pct},
               {"vs_pid_of_means_pct", r.vs_pid_of_means_pct},
               {"vs_noise_of_means_pct", r.vs_noise_of_means_pct}};
  return j;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory '" + path.parent_path().string() +
                    "': " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string curve_csv(const std::vector<ppo::CurveRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "iter,seed,mean_reward,sdf_rl,sdf_pid,sdf_noise\n";
  for (const auto& r : rows) {
    os << r.iter << ',' << r.seed << ',' << r.mean_reward << ',' << r.sdf_rl << ','
       << r.sdf_pid << ',' << r.sdf_noise << '\n';
  }
  return os.str();
}

}  // namespace spillreg::io
