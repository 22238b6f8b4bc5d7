#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/environment.hpp"
#include "flocksim/networks.hpp"
#include "flocksim/nn/adam.hpp"
#include "flocksim/rng.hpp"

namespace flocksim {

/// One follower transition. The action stored is the executed one, after
/// exploration noise and clamping.
struct Experience {
  JointStateE se;
  JointStateO so;
  Action action;
  double reward = 0.0;
  JointStateE se_next;
  JointStateO so_next;
};

/// Ring buffer shared by all followers. Eviction is strictly FIFO; batch
/// sampling is uniform without replacement.
class ReplayMemory {
 public:
  explicit ReplayMemory(int capacity) : capacity_(capacity) {
    if (capacity < 1) {
      throw std::invalid_argument("ReplayMemory: capacity must be >= 1");
    }
    slots_.reserve(static_cast<std::size_t>(capacity));
  }

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(slots_.size()); }

  void add(Experience e) {
    if (size() < capacity_) {
      slots_.push_back(std::move(e));
    } else {
      slots_[next_] = std::move(e);  // next_ is the oldest slot once full
      next_ = (next_ + 1) % static_cast<std::size_t>(capacity_);
    }
  }

  const Experience& at(int i) const { return slots_.at(i); }

  std::vector<int> sample_indices(int batch, Rng& rng) const {
    if (batch < 1 || batch > size()) {
      throw std::invalid_argument("ReplayMemory: batch must be in [1, size]");
    }
    std::vector<int> picked;
    picked.reserve(batch);
    while (static_cast<int>(picked.size()) < batch) {
      const int idx = rng.uniform_int(0, size() - 1);
      if (std::find(picked.begin(), picked.end(), idx) == picked.end()) {
        picked.push_back(idx);
      }
    }
    return picked;
  }

 private:
  int capacity_;
  std::vector<Experience> slots_;
  std::size_t next_ = 0;
};

struct TrainerConfig {
  int episodes = 30000;
  int steps_per_episode = 60;
  int batch_size = 64;
  int replay_capacity = 100000;
  double discount = 0.95;
  double lr_actor = 0.001;
  double lr_critic = 0.0001;
  double sigma_start = 0.5;
  double sigma_end = 0.05;
  int sigma_decay_episodes = 2000;
  int warmup = 64;  // min buffer size before updates begin
  int checkpoint_every = 1000;  // episodes; 0 disables periodic checkpoints

  void validate() const {
    if (episodes < 1) throw std::invalid_argument("trainer: episodes >= 1");
    if (steps_per_episode < 1) {
      throw std::invalid_argument("trainer: steps_per_episode >= 1");
    }
    if (batch_size < 1) throw std::invalid_argument("trainer: batch_size >= 1");
    if (replay_capacity < batch_size) {
      throw std::invalid_argument("trainer: replay_capacity >= batch_size");
    }
    if (!(discount > 0.0 && discount < 1.0)) {
      throw std::invalid_argument("trainer: discount in (0, 1)");
    }
    if (lr_actor <= 0.0 || lr_critic <= 0.0) {
      throw std::invalid_argument("trainer: learning rates must be positive");
    }
    if (sigma_start < sigma_end || sigma_end < 0.0) {
      throw std::invalid_argument("trainer: need sigma_start >= sigma_end >= 0");
    }
    if (sigma_decay_episodes < 1) {
      throw std::invalid_argument("trainer: sigma_decay_episodes >= 1");
    }
    if (warmup < batch_size) {
      throw std::invalid_argument("trainer: warmup >= batch_size");
    }
    if (checkpoint_every < 0) {
      throw std::invalid_argument("trainer: checkpoint_every >= 0");
    }
  }
};

/// Exponential anneal from sigma_start to sigma_end over the decay window,
/// constant afterwards. Episodes are 0-based.
inline double exploration_sigma(const TrainerConfig& cfg, int episode) {
  if (episode < 0) throw std::invalid_argument("exploration_sigma: episode >= 0");
  const int e = std::min(episode, cfg.sigma_decay_episodes);
  if (cfg.sigma_start == cfg.sigma_end) return cfg.sigma_end;
  const double frac =
      static_cast<double>(e) / static_cast<double>(cfg.sigma_decay_episodes);
  return cfg.sigma_start * std::pow(cfg.sigma_end / cfg.sigma_start, frac);
}

/// Zero-mean Gaussian noise with std sigma scaled by each action component's
/// half-range, clamped back to bounds. Always consumes two Gaussian draws so
/// the stream does not shift with sigma.
inline Action explore(const Action& a, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("explore: sigma >= 0");
  const double gr = rng.gaussian();
  const double gv = rng.gaussian();
  Action noisy{a.roll_delta + sigma * Action::kRollMax * gr,
               a.speed_delta + sigma * Action::kSpeedMax * gv};
  return noisy.clamped();
}

inline double td_error(const Experience& exp, PolicyNetwork& critic,
                       double discount) {
  const double v_next = critic.value(exp.se_next, exp.so_next);
  const double v = critic.value(exp.se, exp.so);
  return exp.reward + discount * v_next - v;
}

/// Keeps the indices whose TD error is strictly positive; delta = 0 drops.
inline std::vector<int> positive_td_filter(std::span<const int> batch,
                                           std::span<const double> deltas) {
  if (batch.size() != deltas.size()) {
    throw std::invalid_argument("positive_td_filter: size mismatch");
  }
  std::vector<int> kept;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (deltas[k] > 0.0) kept.push_back(batch[k]);
  }
  return kept;
}

/// One Adam step on the mean squared regression loss toward the executed
/// actions over the positive-TD sub-batch. Returns the pre-step loss.
inline double actor_update(PolicyNetwork& actor, nn::AdamOptimizer& opt,
                           const ReplayMemory& replay,
                           std::span<const int> positive) {
  if (positive.empty()) {
    throw std::invalid_argument("actor_update: sub-batch must be nonempty");
  }
  actor.zero_grads();
  const double inv = 1.0 / static_cast<double>(positive.size());
  double loss = 0.0;
  for (int idx : positive) {
    const Experience& exp = replay.at(idx);
    const auto out = actor.forward(exp.se, exp.so);
    const double er = Action::kRollMax * out[0] - exp.action.roll_delta;
    const double ev = Action::kSpeedMax * out[1] - exp.action.speed_delta;
    loss += er * er + ev * ev;
    const std::array<double, 2> dout = {2.0 * er * Action::kRollMax * inv,
                                        2.0 * ev * Action::kSpeedMax * inv};
    actor.backward(dout);
  }
  opt.step(actor.params());
  return loss * inv;
}

/// Accumulates critic gradients for the mean squared TD error over the batch
/// (targets r + discount * V(s') held constant) without stepping, and reports
/// each tuple's TD error. Returns the pre-step loss.
inline double critic_gradients(PolicyNetwork& critic,
                               const ReplayMemory& replay,
                               std::span<const int> batch, double discount,
                               std::vector<double>& deltas) {
  critic.zero_grads();
  deltas.resize(batch.size());
  const double inv = 1.0 / static_cast<double>(batch.size());
  const double scale = critic.value_scale();
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Experience& exp = replay.at(batch[k]);
    const double target =
        exp.reward + discount * critic.value(exp.se_next, exp.so_next);
    const double v = critic.value(exp.se, exp.so);  // caches this forward
    const double err = v - target;
    deltas[k] = -err;
    loss += err * err;
    const std::array<double, 1> dout = {2.0 * err * inv * scale};
    critic.backward(dout);
  }
  return loss * inv;
}

/// One Adam step on the mean squared TD error. Returns the pre-step loss.
inline double critic_update(PolicyNetwork& critic, nn::AdamOptimizer& opt,
                            const ReplayMemory& replay,
                            std::span<const int> batch, double discount) {
  std::vector<double> deltas;
  const double loss = critic_gradients(critic, replay, batch, discount, deltas);
  opt.step(critic.params());
  return loss;
}

struct EpisodeStats {
  int episode = 0;
  int n_followers = 0;
  double g_avg = 0.0;           // per-follower per-step mean reward
  double collision_rate = 0.0;  // percent of (step, pair) samples below threshold
  double sigma = 0.0;
  double mean_critic_loss = 0.0;  // over this episode's updates; 0 if none
  double mean_actor_loss = 0.0;   // over this episode's actor updates; 0 if none
  int updates = 0;
  int actor_updates = 0;
};

/// Error carrying the episode at which training diverged; a diagnostic
/// checkpoint hook has already run by the time this is thrown.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int episode, const std::string& what)
      : std::runtime_error("training diverged at episode " +
                           std::to_string(episode) + ": " + what),
        episode_(episode) {}
  int episode() const { return episode_; }

 private:
  int episode_;
};

/// PS-CACER training loop: every follower acts through one shared actor,
/// all transitions land in one shared replay buffer, and each environment
/// time step triggers one critic update plus an actor update whenever the
/// sampled batch contains strictly-positive TD errors. Deterministic for a
/// fixed root seed; runs on the calling thread only.
class Trainer {
 public:
  using EpisodeHook = std::function<void(const EpisodeStats&)>;
  // (episode, diagnostic): periodic saves pass diagnostic = false.
  using CheckpointHook = std::function<void(int, bool)>;

  Trainer(const TrainerConfig& cfg, const WorldParams& world,
          const NetworkConfig& net, std::uint64_t seed)
      : cfg_(cfg),
        world_params_(world),
        seed_(seed),
        bounds_{world.reward.d2, world.kinematics.v_min,
                world.kinematics.v_max},
        actor_(net, HeadKind::actor, bounds_,
               derive_seed(seed, stream::kNetworkInit, 0)),
        critic_(net, HeadKind::critic, bounds_,
                derive_seed(seed, stream::kNetworkInit, 1)),
        actor_opt_(nn::AdamConfig{cfg.lr_actor, 0.9, 0.999, 1e-8}),
        critic_opt_(nn::AdamConfig{cfg.lr_critic, 0.9, 0.999, 1e-8}),
        replay_(cfg.replay_capacity),
        explore_rng_(derive_seed(seed, stream::kExploration)),
        replay_rng_(derive_seed(seed, stream::kReplaySampling)) {
    cfg_.validate();
    world_params_.validate();
    actor_opt_.initialize(actor_.params());
    critic_opt_.initialize(critic_.params());
  }

  PolicyNetwork& actor() { return actor_; }
  PolicyNetwork& critic() { return critic_; }
  nn::AdamOptimizer& actor_optimizer() { return actor_opt_; }
  nn::AdamOptimizer& critic_optimizer() { return critic_opt_; }
  const TrainerConfig& config() const { return cfg_; }
  const ReplayMemory& replay() const { return replay_; }
  int episodes_done() const { return episodes_done_; }

  void set_episode_hook(EpisodeHook h) { episode_hook_ = std::move(h); }
  void set_checkpoint_hook(CheckpointHook h) {
    checkpoint_hook_ = std::move(h);
  }

  void run() {
    for (int e = episodes_done_; e < cfg_.episodes; ++e) {
      EpisodeStats stats;
      try {
        stats = run_episode(e);
      } catch (const std::exception& ex) {
        if (checkpoint_hook_) checkpoint_hook_(e, /*diagnostic=*/true);
        throw TrainingDiverged(e, ex.what());
      }
      episodes_done_ = e + 1;
      if (episode_hook_) episode_hook_(stats);
      if (checkpoint_hook_ && cfg_.checkpoint_every > 0 &&
          (e + 1) % cfg_.checkpoint_every == 0) {
        checkpoint_hook_(e + 1, /*diagnostic=*/false);
        last_checkpoint_ = e + 1;
      }
    }
    if (checkpoint_hook_ && last_checkpoint_ != cfg_.episodes) {
      checkpoint_hook_(cfg_.episodes, /*diagnostic=*/false);
      last_checkpoint_ = cfg_.episodes;
    }
  }

 private:
  EpisodeStats run_episode(int episode) {
    FlockWorld world(world_params_,
                     derive_seed(seed_, stream::kEpisodeSetup, episode));
    const int n = world.follower_count();
    const double sigma = exploration_sigma(cfg_, episode);

    EpisodeStats stats;
    stats.episode = episode;
    stats.n_followers = n;
    stats.sigma = sigma;

    std::vector<JointStateE> se(n);
    std::vector<JointStateO> so(n);
    std::vector<Action> actions(n);
    double reward_sum = 0.0;
    long collision_pairs = 0;

    for (int t = 0; t < cfg_.steps_per_episode; ++t) {
      for (int i = 0; i < n; ++i) {
        se[i] = world.joint_state_e(i);
        so[i] = world.joint_state_o(i);
        actions[i] = explore(actor_.act(se[i], so[i]), sigma, explore_rng_);
      }
      world.step(actions);
      collision_pairs += static_cast<long>(
          detect_collisions(world.followers(),
                            world_params_.reward.collision_threshold)
              .size());
      for (int i = 0; i < n; ++i) {
        Experience exp;
        exp.se = se[i];
        exp.so = std::move(so[i]);
        exp.action = actions[i];
        exp.reward = world.reward(i);
        exp.se_next = world.joint_state_e(i);
        exp.so_next = world.joint_state_o(i);
        reward_sum += exp.reward;
        replay_.add(std::move(exp));
      }
      if (replay_.size() >= cfg_.warmup) {
        update_once(stats);
      }
    }

    stats.g_avg = reward_sum / (static_cast<double>(n) *
                                static_cast<double>(cfg_.steps_per_episode));
    const double pair_steps = 0.5 * n * (n - 1) *
                              static_cast<double>(cfg_.steps_per_episode);
    stats.collision_rate =
        pair_steps > 0.0 ? 100.0 * collision_pairs / pair_steps : 0.0;
    if (stats.updates > 0) stats.mean_critic_loss /= stats.updates;
    if (stats.actor_updates > 0) stats.mean_actor_loss /= stats.actor_updates;
    return stats;
  }

  /// TD errors and critic gradients come from the pre-update critic; the
  /// actor steps first, then the critic applies the held gradients.
  void update_once(EpisodeStats& stats) {
    const auto batch = replay_.sample_indices(cfg_.batch_size, replay_rng_);
    const double critic_loss =
        critic_gradients(critic_, replay_, batch, cfg_.discount, deltas_);
    if (!std::isfinite(critic_loss)) {
      throw std::runtime_error("non-finite critic loss");
    }
    positive_ = positive_td_filter(batch, deltas_);
    if (!positive_.empty()) {
      const double actor_loss =
          actor_update(actor_, actor_opt_, replay_, positive_);
      if (!std::isfinite(actor_loss)) {
        throw std::runtime_error("non-finite actor loss");
      }
      stats.mean_actor_loss += actor_loss;
      ++stats.actor_updates;
    }
    critic_opt_.step(critic_.params());
    stats.mean_critic_loss += critic_loss;
    ++stats.updates;
  }

  TrainerConfig cfg_;
  WorldParams world_params_;
  std::uint64_t seed_;
  NormBounds bounds_;
  PolicyNetwork actor_;
  PolicyNetwork critic_;
  nn::AdamOptimizer actor_opt_;
  nn::AdamOptimizer critic_opt_;
  ReplayMemory replay_;
  Rng explore_rng_;
  Rng replay_rng_;
  std::vector<double> deltas_;
  std::vector<int> positive_;
  EpisodeHook episode_hook_;
  CheckpointHook checkpoint_hook_;
  int episodes_done_ = 0;
  int last_checkpoint_ = -1;
};

}  // namespace flocksim
