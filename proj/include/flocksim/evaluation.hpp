#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/config.hpp"
#include "flocksim/csv.hpp"
#include "flocksim/environment.hpp"
#include "flocksim/networks.hpp"
#include "flocksim/rng.hpp"
#include "flocksim/trainer.hpp"

namespace flocksim {

/// Mid-episode squad growth: `count` followers join right before the actions
/// of step `step` (0-based) are chosen.
struct JoinEvent {
  int step = 0;
  int count = 0;
};

struct Scenario {
  int n_initial = 4;
  int steps = 180;
  std::vector<JoinEvent> joins;

  void validate() const {
    if (n_initial < 1) throw std::invalid_argument("scenario: n_initial >= 1");
    if (steps < 0) throw std::invalid_argument("scenario: steps >= 0");
    for (const auto& j : joins) {
      if (j.step < 0 || j.step >= std::max(steps, 1) || j.count < 1) {
        throw std::invalid_argument("scenario: join events must land in-episode");
      }
    }
  }
};

/// Snapshot after one control step (t counts from 1; t = 0 is the spawn
/// state). Rewards are per follower, in follower-index order.
struct StepRecord {
  int t = 0;
  UAVState leader;
  std::vector<UAVState> followers;
  std::vector<double> rewards;
};

struct EpisodeLog {
  int episode = 0;
  std::uint64_t seed = 0;
  std::string policy_id;
  int n_initial = 0;
  StepRecord initial;
  std::vector<StepRecord> steps;
};

namespace detail {

inline StepRecord snapshot(const FlockWorld& world, int t) {
  StepRecord rec;
  rec.t = t;
  rec.leader = world.leader();
  rec.followers.assign(world.followers().begin(), world.followers().end());
  rec.rewards.resize(world.follower_count());
  for (int i = 0; i < world.follower_count(); ++i) {
    rec.rewards[i] = world.reward(i);
  }
  return rec;
}

}  // namespace detail

/// Frozen-policy episode: no exploration noise, joins applied on schedule.
/// Policy is any callable (JointStateE, JointStateO) -> Action.
template <typename Policy>
EpisodeLog rollout(Policy&& policy, WorldParams params, const Scenario& sc,
                   std::uint64_t seed, int episode_index = 0,
                   std::string policy_id = {}) {
  sc.validate();
  params.flock.n_min = sc.n_initial;
  params.flock.n_max = sc.n_initial;
  FlockWorld world(params, derive_seed(seed, stream::kEvalSetup,
                                       static_cast<std::uint64_t>(episode_index)));

  EpisodeLog log;
  log.episode = episode_index;
  log.seed = seed;
  log.policy_id = std::move(policy_id);
  log.n_initial = sc.n_initial;
  log.initial = detail::snapshot(world, 0);
  log.steps.reserve(sc.steps);

  std::vector<Action> actions;
  for (int t = 0; t < sc.steps; ++t) {
    for (const auto& j : sc.joins) {
      if (j.step == t) {
        for (int k = 0; k < j.count; ++k) world.add_follower();
      }
    }
    const int n = world.follower_count();
    actions.resize(n);
    for (int i = 0; i < n; ++i) {
      actions[i] = policy(world.joint_state_e(i), world.joint_state_o(i));
    }
    world.step(actions);
    log.steps.push_back(detail::snapshot(world, t + 1));
  }
  return log;
}

/// Uniform-random action policy, the training-progress baseline.
class RandomPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed)
      : rng_(derive_seed(seed, stream::kBaselinePolicy)) {}

  Action operator()(const JointStateE&, const JointStateO&) {
    return {rng_.uniform(-Action::kRollMax, Action::kRollMax),
            rng_.uniform(-Action::kSpeedMax, Action::kSpeedMax)};
  }

 private:
  Rng rng_;
};

/// Eq. 9 across a fixed-shape episode set: every log must hold exactly
/// `steps` records of `n` followers each; missing entries are an error.
inline double average_reward(std::span<const EpisodeLog> logs, int n,
                             int episodes, int steps) {
  if (n < 1 || episodes < 1 || steps < 1) {
    throw std::invalid_argument("average_reward: n, episodes, steps >= 1");
  }
  if (static_cast<int>(logs.size()) != episodes) {
    throw std::invalid_argument(
        "average_reward: expected " + std::to_string(episodes) +
        " episode logs, got " + std::to_string(logs.size()));
  }
  double sum = 0.0;
  for (const auto& log : logs) {
    if (static_cast<int>(log.steps.size()) != steps) {
      throw std::invalid_argument(
          "average_reward: episode " + std::to_string(log.episode) + " has " +
          std::to_string(log.steps.size()) + " steps, expected " +
          std::to_string(steps));
    }
    for (const auto& rec : log.steps) {
      if (static_cast<int>(rec.rewards.size()) != n) {
        throw std::invalid_argument(
            "average_reward: episode " + std::to_string(log.episode) +
            " step " + std::to_string(rec.t) + " has " +
            std::to_string(rec.rewards.size()) + " rewards, expected " +
            std::to_string(n));
      }
      for (double r : rec.rewards) sum += r;
    }
  }
  return sum / (static_cast<double>(n) * episodes * steps);
}

/// Percent of (step, unordered follower pair) samples with separation below
/// the threshold. Steps with fewer than two followers contribute no pairs.
inline double collision_rate(std::span<const EpisodeLog> logs,
                             double threshold) {
  if (threshold <= 0.0) {
    throw std::invalid_argument("collision_rate: threshold > 0");
  }
  long long violations = 0;
  long long pair_steps = 0;
  for (const auto& log : logs) {
    for (const auto& rec : log.steps) {
      const int n = static_cast<int>(rec.followers.size());
      pair_steps += static_cast<long long>(n) * (n - 1) / 2;
      violations += static_cast<long long>(
          detect_collisions(rec.followers, threshold).size());
    }
  }
  if (pair_steps == 0) {
    throw std::invalid_argument(
        "collision_rate: no follower pairs in the episode set");
  }
  return 100.0 * static_cast<double>(violations) /
         static_cast<double>(pair_steps);
}

/// Per-episode metrics for one log: mean per-follower per-step reward and
/// percent of colliding pair-steps.
inline std::pair<double, double> episode_metrics(const EpisodeLog& log,
                                                 double threshold) {
  double sum = 0.0;
  long long reward_count = 0;
  long long violations = 0;
  long long pair_steps = 0;
  for (const auto& rec : log.steps) {
    for (double r : rec.rewards) sum += r;
    reward_count += static_cast<long long>(rec.rewards.size());
    const int n = static_cast<int>(rec.followers.size());
    pair_steps += static_cast<long long>(n) * (n - 1) / 2;
    violations += static_cast<long long>(
        detect_collisions(rec.followers, threshold).size());
  }
  const double g = reward_count > 0 ? sum / reward_count : 0.0;
  const double c =
      pair_steps > 0 ? 100.0 * violations / static_cast<double>(pair_steps)
                     : 0.0;
  return {g, c};
}

inline std::vector<TrajectoryRow> trajectory_rows(const EpisodeLog& log) {
  std::vector<TrajectoryRow> rows;
  auto emit = [&](const StepRecord& rec) {
    TrajectoryRow lr;
    lr.episode = log.episode;
    lr.t = rec.t;
    lr.uav_id = 0;
    lr.role = "leader";
    lr.x = rec.leader.x;
    lr.y = rec.leader.y;
    lr.psi = rec.leader.psi;
    lr.phi = rec.leader.phi;
    lr.v = rec.leader.v;
    lr.reward = 0.0;
    rows.push_back(std::move(lr));
    for (std::size_t i = 0; i < rec.followers.size(); ++i) {
      TrajectoryRow fr;
      fr.episode = log.episode;
      fr.t = rec.t;
      fr.uav_id = static_cast<int>(i) + 1;
      fr.role = "follower";
      fr.x = rec.followers[i].x;
      fr.y = rec.followers[i].y;
      fr.psi = rec.followers[i].psi;
      fr.phi = rec.followers[i].phi;
      fr.v = rec.followers[i].v;
      fr.reward = rec.rewards[i];
      rows.push_back(std::move(fr));
    }
  };
  emit(log.initial);
  for (const auto& rec : log.steps) emit(rec);
  return rows;
}

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Population variance, two-pass.
inline double variance_of(std::span<const double> xs) {
  const double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) {
    const double d = x - mu;
    s += d * d;
  }
  return s / static_cast<double>(xs.size());
}

struct EvalRun {
  std::vector<MetricsRow> rows;  // one per episode
  double g_avg_mean = 0.0;
  double g_avg_var = 0.0;
  double collision_mean = 0.0;
  double collision_var = 0.0;
};

/// Fixed-n frozen-policy evaluation: `episodes` rollouts, per-episode metrics
/// plus population statistics across episodes.
template <typename Policy>
EvalRun evaluate_policy(Policy&& policy, const WorldParams& params,
                        int episodes, int steps, int n, std::uint64_t seed,
                        const std::string& variant_label) {
  if (episodes < 1 || steps < 1 || n < 1) {
    throw std::invalid_argument("evaluate_policy: episodes, steps, n >= 1");
  }
  Scenario sc;
  sc.n_initial = n;
  sc.steps = steps;
  EvalRun run;
  std::vector<double> gs, cs;
  gs.reserve(episodes);
  cs.reserve(episodes);
  for (int p = 0; p < episodes; ++p) {
    const EpisodeLog log =
        rollout(policy, params, sc, seed, p, variant_label);
    const auto [g, c] =
        episode_metrics(log, params.reward.collision_threshold);
    gs.push_back(g);
    cs.push_back(c);
    MetricsRow row;
    row.variant = variant_label;
    row.n = n;
    row.seed = seed;
    row.episode = p;
    row.g_avg = g;
    row.collision_rate = c;
    run.rows.push_back(std::move(row));
  }
  run.g_avg_mean = mean_of(gs);
  run.g_avg_var = variance_of(gs);
  run.collision_mean = mean_of(cs);
  run.collision_var = variance_of(cs);
  return run;
}

struct CompareConfig {
  std::vector<EmbeddingVariant> variants = {EmbeddingVariant::semp,
                                            EmbeddingVariant::cnnmp};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  WorldParams world;
  NetworkConfig network;  // embedding.variant is overridden per run
  TrainerConfig trainer;
  EvalConfig eval;

  void validate() const {
    if (variants.empty()) {
      throw std::invalid_argument("compare: variants nonempty");
    }
    if (seeds.size() < 3) {
      throw std::invalid_argument("compare: at least 3 seeds");
    }
    world.validate();
    network.validate();
    trainer.validate();
    eval.validate();
  }
};

/// Trains each variant on each seed, evaluates the frozen actor across the
/// n sweep, and aggregates per-episode metrics (pooled over seeds) into one
/// row per variant and n. Statistics are population mean/variance over
/// episodes. The hook, when set, observes each trained actor.
inline std::vector<ComparisonRow> compare_embeddings(
    const CompareConfig& cfg,
    const std::function<void(EmbeddingVariant, std::uint64_t,
                             PolicyNetwork&)>& per_run_hook = {}) {
  cfg.validate();
  std::vector<ComparisonRow> table;
  for (const EmbeddingVariant variant : cfg.variants) {
    NetworkConfig net = cfg.network;
    net.embedding.variant = variant;
    // per n: pooled per-episode metrics across seeds
    std::vector<std::vector<double>> gs(cfg.eval.n_sweep.size());
    std::vector<std::vector<double>> cs(cfg.eval.n_sweep.size());
    for (const std::uint64_t seed : cfg.seeds) {
      Trainer trainer(cfg.trainer, cfg.world, net, seed);
      trainer.run();
      if (per_run_hook) per_run_hook(variant, seed, trainer.actor());
      auto policy = [&trainer](const JointStateE& se, const JointStateO& so) {
        return trainer.actor().act(se, so);
      };
      for (std::size_t k = 0; k < cfg.eval.n_sweep.size(); ++k) {
        const EvalRun run = evaluate_policy(
            policy, cfg.world, cfg.eval.episodes, cfg.eval.steps_per_episode,
            cfg.eval.n_sweep[k], seed, to_string(variant));
        for (const auto& row : run.rows) {
          gs[k].push_back(row.g_avg);
          cs[k].push_back(row.collision_rate);
        }
      }
    }
    for (std::size_t k = 0; k < cfg.eval.n_sweep.size(); ++k) {
      ComparisonRow row;
      row.variant = to_string(variant);
      row.n = cfg.eval.n_sweep[k];
      row.reward_mean = mean_of(gs[k]);
      row.reward_var = variance_of(gs[k]);
      row.collision_rate_mean = mean_of(cs[k]);
      row.collision_rate_var = variance_of(cs[k]);
      table.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace flocksim
