#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flocksim/environment.hpp"
#include "flocksim/kinematics.hpp"
#include "flocksim/networks.hpp"
#include "flocksim/trainer.hpp"

namespace flocksim {

using ordered_json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  int episodes = 200;
  int steps_per_episode = 180;
  std::vector<int> n_sweep = {4, 6, 8, 10};

  void validate() const {
    if (episodes < 1) throw std::invalid_argument("eval: episodes >= 1");
    if (steps_per_episode < 1) {
      throw std::invalid_argument("eval: steps_per_episode >= 1");
    }
    if (n_sweep.empty()) throw std::invalid_argument("eval: n_sweep nonempty");
    for (int n : n_sweep) {
      if (n < 1) throw std::invalid_argument("eval: n_sweep entries >= 1");
    }
  }
};

/// Every run input in one document: all randomness flows from `seed`, all
/// artifacts land under `output_dir`.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  WorldParams world;
  NetworkConfig network;
  TrainerConfig trainer;
  EvalConfig eval;

  void validate() const {
    world.validate();
    network.validate();
    trainer.validate();
    eval.validate();
    if (output_dir.empty()) {
      throw std::invalid_argument("config: output_dir must be nonempty");
    }
  }
};

namespace detail {

inline void check_keys(const ordered_json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError("config: " + path + ": expected an object");
  }
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown field: " + path + "." + key);
    }
  }
}

inline void read(const ordered_json& j, const std::string& path,
                 const char* key, double& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number()) {
    throw ConfigError("config: " + path + "." + key + ": expected a number");
  }
  out = v.get<double>();
}

inline void read(const ordered_json& j, const std::string& path,
                 const char* key, int& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError("config: " + path + "." + key + ": expected an integer");
  }
  out = v.get<int>();
}

inline void read(const ordered_json& j, const std::string& path,
                 const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError("config: " + path + "." + key +
                      ": expected a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

inline void read(const ordered_json& j, const std::string& path,
                 const char* key, bool& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_boolean()) {
    throw ConfigError("config: " + path + "." + key + ": expected a boolean");
  }
  out = v.get<bool>();
}

inline void read(const ordered_json& j, const std::string& path,
                 const char* key, std::string& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_string()) {
    throw ConfigError("config: " + path + "." + key + ": expected a string");
  }
  out = v.get<std::string>();
}

inline void parse_kinematics(const ordered_json& j, const std::string& path,
                             KinematicsConfig& k) {
  check_keys(j, path,
             {"alpha_g", "tau_phi", "tau_v", "phi_rate_max", "accel_max",
              "dt_integrate", "control_period", "v_min", "v_max", "r_bd"});
  read(j, path, "alpha_g", k.alpha_g);
  read(j, path, "tau_phi", k.tau_phi);
  read(j, path, "tau_v", k.tau_v);
  read(j, path, "phi_rate_max", k.phi_rate_max);
  read(j, path, "accel_max", k.accel_max);
  read(j, path, "dt_integrate", k.dt_integrate);
  read(j, path, "control_period", k.control_period);
  read(j, path, "v_min", k.v_min);
  read(j, path, "v_max", k.v_max);
  read(j, path, "r_bd", k.r_bd);
}

inline void parse_disturbance(const ordered_json& j, const std::string& path,
                              DisturbanceConfig& d, bool& enabled) {
  check_keys(j, path, {"sigma_x", "sigma_y", "sigma_psi", "enabled"});
  read(j, path, "sigma_x", d.sigma_x);
  read(j, path, "sigma_y", d.sigma_y);
  read(j, path, "sigma_psi", d.sigma_psi);
  read(j, path, "enabled", enabled);
}

inline void parse_reward(const ordered_json& j, const std::string& path,
                         RewardConfig& r) {
  check_keys(j, path, {"d1", "d2", "omega", "m", "collision_threshold"});
  read(j, path, "d1", r.d1);
  read(j, path, "d2", r.d2);
  read(j, path, "omega", r.omega);
  read(j, path, "m", r.m);
  read(j, path, "collision_threshold", r.collision_threshold);
}

inline void parse_flock(const ordered_json& j, const std::string& path,
                        FlockConfig& f) {
  check_keys(j, path,
             {"n_min", "n_max", "spawn_rho_min", "spawn_rho_max",
              "spawn_max_tries", "spacing_factor"});
  read(j, path, "n_min", f.n_min);
  read(j, path, "n_max", f.n_max);
  read(j, path, "spawn_rho_min", f.spawn_rho_min);
  read(j, path, "spawn_rho_max", f.spawn_rho_max);
  read(j, path, "spawn_max_tries", f.spawn_max_tries);
  read(j, path, "spacing_factor", f.spacing_factor);
}

inline void parse_leader(const ordered_json& j, const std::string& path,
                         LeaderConfig& l) {
  check_keys(j, path,
             {"mode", "waypoints", "capture_radius", "heading_gain",
              "cruise_speed"});
  std::string mode;
  read(j, path, "mode", mode);
  if (!mode.empty()) {
    if (mode == "random") {
      l.mode = LeaderConfig::Mode::random;
    } else if (mode == "scripted") {
      l.mode = LeaderConfig::Mode::scripted;
    } else {
      throw ConfigError("config: " + path +
                        ".mode: expected \"random\" or \"scripted\"");
    }
  }
  if (j.contains("waypoints")) {
    const auto& w = j.at("waypoints");
    if (!w.is_array()) {
      throw ConfigError("config: " + path +
                        ".waypoints: expected an array of [x, y] pairs");
    }
    l.waypoints.clear();
    for (const auto& p : w) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() ||
          !p[1].is_number()) {
        throw ConfigError("config: " + path +
                          ".waypoints: expected an array of [x, y] pairs");
      }
      l.waypoints.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  read(j, path, "capture_radius", l.capture_radius);
  read(j, path, "heading_gain", l.heading_gain);
  read(j, path, "cruise_speed", l.cruise_speed);
}

inline void parse_network(const ordered_json& j, const std::string& path,
                          NetworkConfig& n) {
  check_keys(j, path,
             {"embedding", "leader_branch_units", "merge_units1",
              "merge_units2", "value_scale", "value_offset"});
  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    const std::string epath = path + ".embedding";
    check_keys(e, epath,
               {"variant", "conv1_filters", "conv2_filters", "se_reduction"});
    std::string variant;
    read(e, epath, "variant", variant);
    if (!variant.empty()) {
      try {
        n.embedding.variant = embedding_variant_from_string(variant);
      } catch (const std::invalid_argument&) {
        throw ConfigError("config: " + epath +
                          ".variant: expected \"semp\" or \"cnnmp\"");
      }
    }
    read(e, epath, "conv1_filters", n.embedding.conv1_filters);
    read(e, epath, "conv2_filters", n.embedding.conv2_filters);
    read(e, epath, "se_reduction", n.embedding.se_reduction);
  }
  read(j, path, "leader_branch_units", n.leader_branch_units);
  read(j, path, "merge_units1", n.merge_units1);
  read(j, path, "merge_units2", n.merge_units2);
  read(j, path, "value_scale", n.value_scale);
  read(j, path, "value_offset", n.value_offset);
}

inline void parse_trainer(const ordered_json& j, const std::string& path,
                          TrainerConfig& t) {
  check_keys(j, path,
             {"episodes", "steps_per_episode", "batch_size", "replay_capacity",
              "discount", "lr_actor", "lr_critic", "sigma_start", "sigma_end",
              "sigma_decay_episodes", "warmup", "checkpoint_every"});
  read(j, path, "episodes", t.episodes);
  read(j, path, "steps_per_episode", t.steps_per_episode);
  read(j, path, "batch_size", t.batch_size);
  read(j, path, "replay_capacity", t.replay_capacity);
  read(j, path, "discount", t.discount);
  read(j, path, "lr_actor", t.lr_actor);
  read(j, path, "lr_critic", t.lr_critic);
  read(j, path, "sigma_start", t.sigma_start);
  read(j, path, "sigma_end", t.sigma_end);
  read(j, path, "sigma_decay_episodes", t.sigma_decay_episodes);
  read(j, path, "warmup", t.warmup);
  read(j, path, "checkpoint_every", t.checkpoint_every);
}

inline void parse_eval(const ordered_json& j, const std::string& path,
                       EvalConfig& e) {
  check_keys(j, path, {"episodes", "steps_per_episode", "n_sweep"});
  read(j, path, "episodes", e.episodes);
  read(j, path, "steps_per_episode", e.steps_per_episode);
  if (j.contains("n_sweep")) {
    const auto& a = j.at("n_sweep");
    if (!a.is_array()) {
      throw ConfigError("config: " + path +
                        ".n_sweep: expected an array of integers");
    }
    e.n_sweep.clear();
    for (const auto& v : a) {
      if (!v.is_number_integer()) {
        throw ConfigError("config: " + path +
                          ".n_sweep: expected an array of integers");
      }
      e.n_sweep.push_back(v.get<int>());
    }
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const ordered_json& j) {
  RunConfig cfg;
  detail::check_keys(j, "$",
                     {"seed", "output_dir", "kinematics", "disturbance",
                      "reward", "flock", "leader", "network", "trainer",
                      "evaluation"});
  detail::read(j, "$", "seed", cfg.seed);
  detail::read(j, "$", "output_dir", cfg.output_dir);
  if (j.contains("kinematics")) {
    detail::parse_kinematics(j.at("kinematics"), "kinematics",
                             cfg.world.kinematics);
  }
  if (j.contains("disturbance")) {
    detail::parse_disturbance(j.at("disturbance"), "disturbance",
                              cfg.world.disturbance,
                              cfg.world.disturbances_enabled);
  }
  if (j.contains("reward")) {
    detail::parse_reward(j.at("reward"), "reward", cfg.world.reward);
  }
  if (j.contains("flock")) {
    detail::parse_flock(j.at("flock"), "flock", cfg.world.flock);
  }
  if (j.contains("leader")) {
    detail::parse_leader(j.at("leader"), "leader", cfg.world.leader);
  }
  if (j.contains("network")) {
    detail::parse_network(j.at("network"), "network", cfg.network);
  }
  if (j.contains("trainer")) {
    detail::parse_trainer(j.at("trainer"), "trainer", cfg.trainer);
  }
  if (j.contains("evaluation")) {
    detail::parse_eval(j.at("evaluation"), "evaluation", cfg.eval);
  }
  return cfg;
}

inline ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  const auto& k = cfg.world.kinematics;
  j["kinematics"] = {{"alpha_g", k.alpha_g},
                     {"tau_phi", k.tau_phi},
                     {"tau_v", k.tau_v},
                     {"phi_rate_max", k.phi_rate_max},
                     {"accel_max", k.accel_max},
                     {"dt_integrate", k.dt_integrate},
                     {"control_period", k.control_period},
                     {"v_min", k.v_min},
                     {"v_max", k.v_max},
                     {"r_bd", k.r_bd}};
  const auto& d = cfg.world.disturbance;
  j["disturbance"] = {{"sigma_x", d.sigma_x},
                      {"sigma_y", d.sigma_y},
                      {"sigma_psi", d.sigma_psi},
                      {"enabled", cfg.world.disturbances_enabled}};
  const auto& r = cfg.world.reward;
  j["reward"] = {{"d1", r.d1},
                 {"d2", r.d2},
                 {"omega", r.omega},
                 {"m", r.m},
                 {"collision_threshold", r.collision_threshold}};
  const auto& f = cfg.world.flock;
  j["flock"] = {{"n_min", f.n_min},
                {"n_max", f.n_max},
                {"spawn_rho_min", f.spawn_rho_min},
                {"spawn_rho_max", f.spawn_rho_max},
                {"spawn_max_tries", f.spawn_max_tries},
                {"spacing_factor", f.spacing_factor}};
  const auto& l = cfg.world.leader;
  ordered_json waypoints = ordered_json::array();
  for (const auto& w : l.waypoints) waypoints.push_back({w[0], w[1]});
  j["leader"] = {
      {"mode", l.mode == LeaderConfig::Mode::random ? "random" : "scripted"},
      {"waypoints", waypoints},
      {"capture_radius", l.capture_radius},
      {"heading_gain", l.heading_gain},
      {"cruise_speed", l.cruise_speed}};
  const auto& n = cfg.network;
  j["network"] = {
      {"embedding",
       {{"variant",
         n.embedding.variant == EmbeddingVariant::semp ? "semp" : "cnnmp"},
        {"conv1_filters", n.embedding.conv1_filters},
        {"conv2_filters", n.embedding.conv2_filters},
        {"se_reduction", n.embedding.se_reduction}}},
      {"leader_branch_units", n.leader_branch_units},
      {"merge_units1", n.merge_units1},
      {"merge_units2", n.merge_units2},
      {"value_scale", n.value_scale},
      {"value_offset", n.value_offset}};
  const auto& t = cfg.trainer;
  j["trainer"] = {{"episodes", t.episodes},
                  {"steps_per_episode", t.steps_per_episode},
                  {"batch_size", t.batch_size},
                  {"replay_capacity", t.replay_capacity},
                  {"discount", t.discount},
                  {"lr_actor", t.lr_actor},
                  {"lr_critic", t.lr_critic},
                  {"sigma_start", t.sigma_start},
                  {"sigma_end", t.sigma_end},
                  {"sigma_decay_episodes", t.sigma_decay_episodes},
                  {"warmup", t.warmup},
                  {"checkpoint_every", t.checkpoint_every}};
  const auto& e = cfg.eval;
  j["evaluation"] = {{"episodes", e.episodes},
                     {"steps_per_episode", e.steps_per_episode},
                     {"n_sweep", e.n_sweep}};
  return j;
}

inline std::string serialize_run_config(const RunConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

inline RunConfig parse_run_config_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("config: cannot open file: " + path.string());
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config_text(ss.str());
}

/// FNV-1a over the canonical serialized form; identifies the config a
/// checkpoint was produced with.
inline std::uint64_t config_digest(const RunConfig& cfg) {
  const std::string text = serialize_run_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace flocksim
