#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/kinematics.hpp"
#include "flocksim/rng.hpp"

namespace flocksim {

/// Ego-follower / leader joint state: ego pose expressed in the leader frame
/// plus both aircraft's roll/speed and the leader's current setpoints.
struct JointStateE {
  double rel_x = 0.0;                 // m, along leader heading
  double rel_y = 0.0;                 // m, leader-left positive
  double heading_diff = 0.0;          // rad in [-pi, pi)
  double ego_roll = 0.0;              // rad
  double leader_roll = 0.0;           // rad
  double leader_roll_setpoint = 0.0;  // rad
  double ego_speed = 0.0;             // m/s
  double leader_speed = 0.0;          // m/s
  double leader_speed_setpoint = 0.0; // m/s

  std::array<double, 9> as_array() const {
    return {rel_x,       rel_y,        heading_diff,
            ego_roll,    leader_roll,  leader_roll_setpoint,
            ego_speed,   leader_speed, leader_speed_setpoint};
  }

  double distance() const { return std::hypot(rel_x, rel_y); }
};

/// Ego-follower / other-followers joint state: one row per other follower,
/// (rel_x, rel_y, heading_diff, roll, speed) in the ego frame. Rows keep the
/// stable follower-index order; they are never distance-sorted.
struct JointStateO {
  static constexpr int kRowWidth = 5;
  using Row = std::array<double, kRowWidth>;
  std::vector<Row> rows;

  int count() const { return static_cast<int>(rows.size()); }
};

/// Continuous follower action: a bounded roll increment and speed increment.
struct Action {
  static constexpr double kRollMax = kPi / 18.0;  // rad
  static constexpr double kSpeedMax = 1.0;        // m/s

  double roll_delta = 0.0;
  double speed_delta = 0.0;

  bool in_bounds() const {
    return std::abs(roll_delta) <= kRollMax + 1e-12 &&
           std::abs(speed_delta) <= kSpeedMax + 1e-12;
  }

  Action clamped() const {
    return {std::clamp(roll_delta, -kRollMax, kRollMax),
            std::clamp(speed_delta, -kSpeedMax, kSpeedMax)};
  }
};

struct RewardConfig {
  double d1 = 40.0;                 // m, annulus inner radius
  double d2 = 65.0;                 // m, annulus outer radius
  double omega = 0.05;              // 1/m
  double m = 2.0;                   // dimensionless
  double collision_threshold = 2.0; // m

  void validate() const {
    if (!(0 < d1 && d1 < d2)) {
      throw std::invalid_argument("reward: need 0 < d1 < d2");
    }
    if (omega <= 0 || m <= 0) {
      throw std::invalid_argument("reward: omega and m must be positive");
    }
    if (!(collision_threshold > 0 && collision_threshold < d1)) {
      throw std::invalid_argument(
          "reward: collision_threshold must lie in (0, d1)");
    }
  }
};

struct FlockConfig {
  int n_min = 3;
  int n_max = 10;
  double spawn_rho_min = 40.0;  // m
  double spawn_rho_max = 65.0;  // m
  int spawn_max_tries = 1000;
  // Pairwise spawn spacing = spacing_factor * collision_threshold.
  double spacing_factor = 5.0;

  void validate() const {
    if (!(1 <= n_min && n_min <= n_max)) {
      throw std::invalid_argument("flock: need 1 <= n_min <= n_max");
    }
    if (!(0 < spawn_rho_min && spawn_rho_min < spawn_rho_max)) {
      throw std::invalid_argument("flock: bad spawn annulus radii");
    }
  }
};

struct LeaderConfig {
  enum class Mode { random, scripted };
  Mode mode = Mode::random;
  std::vector<std::array<double, 2>> waypoints;  // scripted mode only
  double capture_radius = 30.0;  // m, waypoint switch distance
  double heading_gain = 1.0;     // rad roll per rad heading error
  double cruise_speed = 15.0;    // m/s, scripted mode

  void validate() const {
    if (mode == Mode::scripted && waypoints.empty()) {
      throw std::invalid_argument("leader: scripted mode needs waypoints");
    }
  }
};

// ---------------------------------------------------------------------------
// State encodings

inline JointStateE encode_joint_e(const UAVState& ego, const UAVState& leader,
                                  double leader_roll_setpoint,
                                  double leader_speed_setpoint) {
  const double c = std::cos(leader.psi);
  const double s = std::sin(leader.psi);
  const double dx = ego.x - leader.x;
  const double dy = ego.y - leader.y;
  JointStateE e;
  e.rel_x = c * dx + s * dy;
  e.rel_y = -s * dx + c * dy;
  e.heading_diff = wrap_angle(ego.psi - leader.psi);
  e.ego_roll = ego.phi;
  e.leader_roll = leader.phi;
  e.leader_roll_setpoint = leader_roll_setpoint;
  e.ego_speed = ego.v;
  e.leader_speed = leader.v;
  e.leader_speed_setpoint = leader_speed_setpoint;
  return e;
}

inline JointStateO encode_joint_o(const UAVState& ego,
                                  std::span<const UAVState> others) {
  const double c = std::cos(ego.psi);
  const double s = std::sin(ego.psi);
  JointStateO o;
  o.rows.reserve(others.size());
  for (const UAVState& f : others) {
    const double dx = f.x - ego.x;
    const double dy = f.y - ego.y;
    o.rows.push_back({c * dx + s * dy, -s * dx + c * dy,
                      wrap_angle(f.psi - ego.psi), f.phi, f.v});
  }
  return o;
}

// ---------------------------------------------------------------------------
// Action semantics

/// Roll setpoint from the current roll and a bounded roll action.
inline double apply_roll_action(double phi, double roll_delta, double r_bd) {
  if (std::abs(roll_delta) > Action::kRollMax + 1e-12) {
    throw std::invalid_argument("apply_roll_action: action out of range");
  }
  const double raw = phi + roll_delta;
  if (raw > r_bd) return r_bd;
  if (raw < -r_bd) return -r_bd;
  return raw;
}

/// Speed setpoint from the current speed and a bounded speed action.
inline double apply_velocity_action(double v, double speed_delta, double v_min,
                                    double v_max) {
  if (std::abs(speed_delta) > Action::kSpeedMax + 1e-12) {
    throw std::invalid_argument("apply_velocity_action: action out of range");
  }
  const double raw = v + speed_delta;
  if (raw > v_max) return v_max;
  if (raw < v_min) return v_min;
  return raw;
}

// ---------------------------------------------------------------------------
// Rewards (all non-positive)

inline double flocking_reward(const JointStateE& se, const RewardConfig& cfg) {
  const double rho = std::hypot(se.rel_x, se.rel_y);
  const double de =
      std::max({cfg.m * (cfg.d1 - rho), 0.0, rho - cfg.d2});
  const double heading_term =
      cfg.d1 * std::abs(se.heading_diff) / (kPi * (1.0 + cfg.omega * de));
  return -std::max(de, heading_term) + 0.0;
}

inline double collision_penalty(const JointStateO::Row& row,
                                const RewardConfig& cfg) {
  const double rho = std::hypot(row[0], row[1]);
  return -std::max(cfg.m * (cfg.d1 - rho), 0.0) + 0.0;
}

inline double total_reward(const JointStateE& se, const JointStateO& so,
                           const RewardConfig& cfg) {
  double r = flocking_reward(se, cfg);
  for (const auto& row : so.rows) {
    r += collision_penalty(row, cfg);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Collision detection

/// All unordered index pairs with Euclidean separation strictly below
/// threshold.
inline std::vector<std::pair<int, int>> detect_collisions(
    std::span<const UAVState> followers, double threshold) {
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(followers.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d =
          std::hypot(followers[i].x - followers[j].x,
                     followers[i].y - followers[j].y);
      if (d < threshold) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Leader policy

struct LeaderCommand {
  double roll_setpoint = 0.0;
  double speed_setpoint = 15.0;
};

/// Next leader command. Random mode samples uniformly from the follower
/// action space and maps through the same setpoint clamps; scripted mode
/// steers at the active waypoint with proportional heading control.
inline LeaderCommand leader_step(const LeaderConfig& policy,
                                 const UAVState& leader,
                                 const KinematicsConfig& kin, Rng& rng,
                                 std::size_t& waypoint_index) {
  LeaderCommand cmd;
  if (policy.mode == LeaderConfig::Mode::random) {
    const double ar = rng.uniform(-Action::kRollMax, Action::kRollMax);
    const double av = rng.uniform(-Action::kSpeedMax, Action::kSpeedMax);
    cmd.roll_setpoint = apply_roll_action(leader.phi, ar, kin.r_bd);
    cmd.speed_setpoint =
        apply_velocity_action(leader.v, av, kin.v_min, kin.v_max);
    return cmd;
  }
  if (policy.waypoints.empty()) {
    throw std::invalid_argument("leader_step: empty waypoint list");
  }
  // Advance past captured waypoints; hold the last one.
  while (waypoint_index + 1 < policy.waypoints.size()) {
    const auto& wp = policy.waypoints[waypoint_index];
    if (std::hypot(wp[0] - leader.x, wp[1] - leader.y) >=
        policy.capture_radius) {
      break;
    }
    ++waypoint_index;
  }
  const auto& wp = policy.waypoints[waypoint_index];
  const double desired = std::atan2(wp[1] - leader.y, wp[0] - leader.x);
  const double err = wrap_angle(desired - leader.psi);
  cmd.roll_setpoint = std::clamp(policy.heading_gain * err, -kin.r_bd, kin.r_bd);
  cmd.speed_setpoint =
      std::clamp(policy.cruise_speed, kin.v_min, kin.v_max);
  return cmd;
}

// ---------------------------------------------------------------------------
// World

struct WorldParams {
  KinematicsConfig kinematics;
  DisturbanceConfig disturbance;
  RewardConfig reward;
  FlockConfig flock;
  LeaderConfig leader;
  bool disturbances_enabled = true;

  void validate() const {
    kinematics.validate();
    disturbance.validate();
    reward.validate();
    flock.validate();
    leader.validate();
  }
};

/// One flocking episode: a scripted or random-walk leader plus n followers.
/// Construction performs the episode reset (follower count sampled from the
/// configured range, spawn in the annulus with minimum pairwise spacing).
/// Single-writer stepping; state encodings are pure reads.
class FlockWorld {
 public:
  FlockWorld(const WorldParams& params, std::uint64_t seed)
      : params_(params),
        seed_(seed),
        spawn_rng_(derive_seed(seed, stream::kWorldSpawn)),
        leader_rng_(derive_seed(seed, stream::kLeaderCommands)) {
    params_.validate();
    const DisturbanceConfig noise =
        params_.disturbances_enabled ? params_.disturbance
                                     : DisturbanceConfig{0.0, 0.0, 0.0};
    leader_.psi = spawn_rng_.uniform(-kPi, kPi);
    leader_.v = spawn_rng_.uniform(params_.kinematics.v_min,
                                   params_.kinematics.v_max);
    leader_noise_.emplace(noise, derive_seed(seed, stream::kDisturbance, 0));

    const int n = spawn_rng_.uniform_int(params_.flock.n_min,
                                         params_.flock.n_max);
    followers_.reserve(n);
    for (int i = 0; i < n; ++i) {
      spawn_follower(/*edge_only=*/false);
    }
    command_ = leader_step(params_.leader, leader_, params_.kinematics,
                           leader_rng_, waypoint_index_);
  }

  int follower_count() const { return static_cast<int>(followers_.size()); }
  const UAVState& leader() const { return leader_; }
  const UAVState& follower(int i) const { return followers_.at(i); }
  std::span<const UAVState> followers() const { return followers_; }
  const LeaderCommand& leader_command() const { return command_; }
  const WorldParams& params() const { return params_; }
  int time_step() const { return t_; }

  JointStateE joint_state_e(int i) const {
    return encode_joint_e(followers_.at(i), leader_, command_.roll_setpoint,
                          command_.speed_setpoint);
  }

  JointStateO joint_state_o(int i) const {
    others_scratch_.clear();
    for (int j = 0; j < follower_count(); ++j) {
      if (j != i) others_scratch_.push_back(followers_[j]);
    }
    return encode_joint_o(followers_.at(i), others_scratch_);
  }

  double reward(int i) const {
    return total_reward(joint_state_e(i), joint_state_o(i), params_.reward);
  }

  /// Integrates the leader and every follower by one control period, then
  /// draws the leader command the flock will observe at the new step.
  void step(std::span<const Action> actions) {
    if (static_cast<int>(actions.size()) != follower_count()) {
      throw std::invalid_argument("FlockWorld::step: one action per follower");
    }
    const KinematicsConfig& kin = params_.kinematics;
    leader_ = flocksim::step(leader_, command_.roll_setpoint,
                             command_.speed_setpoint, *leader_noise_, kin);
    for (int i = 0; i < follower_count(); ++i) {
      if (!actions[i].in_bounds()) {
        throw std::invalid_argument("FlockWorld::step: action out of bounds");
      }
      const double phi_d =
          apply_roll_action(followers_[i].phi, actions[i].roll_delta, kin.r_bd);
      const double v_d = apply_velocity_action(
          followers_[i].v, actions[i].speed_delta, kin.v_min, kin.v_max);
      followers_[i] =
          flocksim::step(followers_[i], phi_d, v_d, follower_noise_[i], kin);
    }
    command_ = leader_step(params_.leader, leader_, kin, leader_rng_,
                           waypoint_index_);
    ++t_;
  }

  /// Mid-episode join: spawns one follower at the annulus outer edge.
  /// Returns its index.
  int add_follower() {
    spawn_follower(/*edge_only=*/true);
    return follower_count() - 1;
  }

  std::vector<std::pair<int, int>> collisions() const {
    return detect_collisions(followers_, params_.reward.collision_threshold);
  }

 private:
  void spawn_follower(bool edge_only) {
    const FlockConfig& fc = params_.flock;
    const double spacing =
        fc.spacing_factor * params_.reward.collision_threshold;
    const double r0 = fc.spawn_rho_min;
    const double r1 = fc.spawn_rho_max;
    for (int attempt = 0; attempt < fc.spawn_max_tries; ++attempt) {
      const double theta = spawn_rng_.uniform(-kPi, kPi);
      // Area-uniform radius inside the annulus; joins enter at the outer edge.
      const double rho =
          edge_only ? r1
                    : std::sqrt(spawn_rng_.uniform(r0 * r0, r1 * r1));
      UAVState s;
      s.x = leader_.x + rho * std::cos(theta);
      s.y = leader_.y + rho * std::sin(theta);
      s.psi = spawn_rng_.uniform(-kPi, kPi);
      s.phi = 0.0;
      s.v = spawn_rng_.uniform(params_.kinematics.v_min,
                               params_.kinematics.v_max);
      bool clear = true;
      for (const UAVState& f : followers_) {
        if (std::hypot(f.x - s.x, f.y - s.y) < spacing) {
          clear = false;
          break;
        }
      }
      if (clear) {
        followers_.push_back(s);
        follower_noise_.emplace_back(
            params_.disturbances_enabled ? params_.disturbance
                                         : DisturbanceConfig{0.0, 0.0, 0.0},
            derive_seed(seed_, stream::kDisturbance,
                        1 + next_follower_id_++));
        return;
      }
    }
    throw std::runtime_error(
        "FlockWorld: spawn rejection sampling failed (annulus too crowded)");
  }

  WorldParams params_;
  std::uint64_t seed_ = 0;
  Rng spawn_rng_;
  Rng leader_rng_;
  UAVState leader_;
  std::optional<DisturbanceModel> leader_noise_;
  std::vector<UAVState> followers_;
  std::vector<DisturbanceModel> follower_noise_;
  LeaderCommand command_;
  std::size_t waypoint_index_ = 0;
  std::uint64_t next_follower_id_ = 0;
  int t_ = 0;
  mutable std::vector<UAVState> others_scratch_;
};

}  // namespace flocksim
