// Command-line driver: train / eval / rollout / plot / compare.
// Exit codes: 0 success, 2 configuration, 3 checkpoint, 4 runtime.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flocksim/checkpoint.hpp"
#include "flocksim/config.hpp"
#include "flocksim/csv.hpp"
#include "flocksim/evaluation.hpp"
#include "flocksim/svg.hpp"
#include "flocksim/trainer.hpp"

namespace fs = std::filesystem;
using namespace flocksim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitRuntime = 4;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<int> steps;
  std::optional<std::string> variant;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run configuration (JSON)");
  cmd->add_option("--seed", o.seed, "override the global seed");
  cmd->add_option("--episodes", o.episodes, "override the episode count");
  cmd->add_option("--steps", o.steps, "override steps per episode");
  cmd->add_option("--variant", o.variant, "embedding variant: semp | cnnmp");
  cmd->add_option("--output-dir", o.output_dir, "override the output directory");
}

RunConfig resolve_config(const CommonOpts& o, bool for_training) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.variant) {
    try {
      cfg.network.embedding.variant = embedding_variant_from_string(*o.variant);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: --variant: expected \"semp\" or \"cnnmp\"");
    }
  }
  if (o.episodes) {
    (for_training ? cfg.trainer.episodes : cfg.eval.episodes) = *o.episodes;
  }
  if (o.steps) {
    (for_training ? cfg.trainer.steps_per_episode
                  : cfg.eval.steps_per_episode) = *o.steps;
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

NormBounds bounds_of(const RunConfig& cfg) {
  return {cfg.world.reward.d2, cfg.world.kinematics.v_min,
          cfg.world.kinematics.v_max};
}

void write_resolved_config(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  const fs::path path = fs::path(cfg.output_dir) / "config.resolved.json";
  std::ofstream os(path);
  if (!os) throw ConfigError("config: cannot write " + path.string());
  os << serialize_run_config(cfg);
}

int cmd_train(const CommonOpts& o) {
  const RunConfig cfg = resolve_config(o, /*for_training=*/true);
  write_resolved_config(cfg);
  const fs::path out(cfg.output_dir);

  std::ofstream metrics_file(out / "metrics.csv");
  if (!metrics_file) {
    throw ConfigError("config: cannot write " +
                      (out / "metrics.csv").string());
  }
  MetricsWriter metrics(metrics_file);
  const std::string variant = to_string(cfg.network.embedding.variant);

  Trainer trainer(cfg.trainer, cfg.world, cfg.network, cfg.seed);
  const std::uint64_t digest = config_digest(cfg);
  trainer.set_episode_hook([&](const EpisodeStats& s) {
    MetricsRow row;
    row.variant = variant;
    row.n = s.n_followers;
    row.seed = cfg.seed;
    row.episode = s.episode;
    row.g_avg = s.g_avg;
    row.collision_rate = s.collision_rate;
    metrics.write(row);
    if ((s.episode + 1) % 100 == 0 || s.episode + 1 == cfg.trainer.episodes) {
      std::cerr << "episode " << (s.episode + 1) << "/" << cfg.trainer.episodes
                << "  G_Avg " << format_double(s.g_avg) << "  sigma "
                << format_double(s.sigma) << "\n";
    }
  });
  trainer.set_checkpoint_hook([&](int episode, bool diagnostic) {
    fs::path path;
    if (diagnostic) {
      path = out / "checkpoint_diagnostic.ckpt";
    } else if (episode == cfg.trainer.episodes) {
      path = out / "checkpoint_final.ckpt";
    } else {
      path = out / ("checkpoint_ep" + std::to_string(episode) + ".ckpt");
    }
    save_checkpoint(path, digest, static_cast<std::uint64_t>(episode),
                    trainer.actor(), trainer.critic(),
                    trainer.actor_optimizer(), trainer.critic_optimizer());
  });
  trainer.run();
  metrics_file.flush();
  std::cout << "trained " << cfg.trainer.episodes << " episodes; artifacts in "
            << cfg.output_dir << "\n";
  return kExitOk;
}

struct LoadedPolicy {
  NormBounds bounds;
  std::unique_ptr<PolicyNetwork> actor;
  std::unique_ptr<PolicyNetwork> critic;
  CheckpointMeta meta;
};

LoadedPolicy load_policy(const RunConfig& cfg, const std::string& ckpt_path) {
  LoadedPolicy lp{bounds_of(cfg), nullptr, nullptr, {}};
  lp.actor = std::make_unique<PolicyNetwork>(
      cfg.network, HeadKind::actor, lp.bounds,
      derive_seed(cfg.seed, stream::kNetworkInit, 0));
  lp.critic = std::make_unique<PolicyNetwork>(
      cfg.network, HeadKind::critic, lp.bounds,
      derive_seed(cfg.seed, stream::kNetworkInit, 1));
  lp.meta = load_checkpoint(ckpt_path, *lp.actor, *lp.critic);
  if (lp.meta.config_digest != config_digest(cfg)) {
    std::cerr << "note: checkpoint was produced under a different "
                 "configuration (digest mismatch)\n";
  }
  return lp;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_path, int n,
             const std::string& output) {
  const RunConfig cfg = resolve_config(o, /*for_training=*/false);
  LoadedPolicy lp = load_policy(cfg, ckpt_path);
  auto policy = [&](const JointStateE& se, const JointStateO& so) {
    return lp.actor->act(se, so);
  };
  const EvalRun run = evaluate_policy(
      policy, cfg.world, cfg.eval.episodes, cfg.eval.steps_per_episode, n,
      cfg.seed, to_string(cfg.network.embedding.variant));

  fs::path out_path = output.empty()
                          ? fs::path(cfg.output_dir) / "eval_metrics.csv"
                          : fs::path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream os(out_path);
  if (!os) throw ConfigError("config: cannot write " + out_path.string());
  MetricsWriter writer(os);
  for (const auto& row : run.rows) writer.write(row);
  os.flush();

  std::cout << "episodes " << cfg.eval.episodes << "  n " << n << "\n"
            << "G_Avg mean " << format_double(run.g_avg_mean) << "  var "
            << format_double(run.g_avg_var) << "\n"
            << "collision_rate mean " << format_double(run.collision_mean)
            << "%  var " << format_double(run.collision_var) << "\n"
            << "metrics written to " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_rollout(const CommonOpts& o, const std::string& ckpt_path, int n,
                const std::vector<std::string>& joins,
                const std::string& output) {
  const RunConfig cfg = resolve_config(o, /*for_training=*/false);

  Scenario sc;
  sc.n_initial = n;
  sc.steps = cfg.eval.steps_per_episode;
  for (const std::string& spec : joins) {
    const auto colon = spec.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(spec);
      sc.joins.push_back({std::stoi(spec.substr(0, colon)),
                          std::stoi(spec.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("config: --join: expected STEP:COUNT, got '" + spec +
                        "'");
    }
  }
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  LoadedPolicy lp = load_policy(cfg, ckpt_path);

  auto policy = [&](const JointStateE& se, const JointStateO& so) {
    return lp.actor->act(se, so);
  };
  const EpisodeLog log = rollout(policy, cfg.world, sc, cfg.seed, 0,
                                 to_string(cfg.network.embedding.variant));

  fs::path out_path = output.empty()
                          ? fs::path(cfg.output_dir) / "trajectory.csv"
                          : fs::path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream os(out_path);
  if (!os) throw ConfigError("config: cannot write " + out_path.string());
  TrajectoryWriter writer(os);
  for (const auto& row : trajectory_rows(log)) writer.write(row);
  os.flush();
  std::cout << "rollout: " << sc.steps << " steps, followers "
            << log.initial.followers.size() << " -> "
            << (log.steps.empty() ? log.initial.followers.size()
                                  : log.steps.back().followers.size())
            << "; trajectory written to " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_plot(const std::string& input, const std::string& output,
             double threshold) {
  const auto rows = load_trajectory(input);
  const std::string svg = render_plots(rows, threshold);
  fs::path out_path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream os(out_path);
  if (!os) throw ConfigError("config: cannot write " + out_path.string());
  os << svg;
  os.flush();
  std::cout << "plot written to " << out_path.string() << " (" << rows.size()
            << " rows)\n";
  return kExitOk;
}

int cmd_compare(const CommonOpts& o, const std::vector<std::uint64_t>& seeds,
                const std::string& output) {
  const RunConfig cfg = resolve_config(o, /*for_training=*/true);
  CompareConfig cc;
  cc.world = cfg.world;
  cc.network = cfg.network;
  cc.trainer = cfg.trainer;
  cc.eval = cfg.eval;
  if (!seeds.empty()) cc.seeds = seeds;
  try {
    cc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const auto table = compare_embeddings(
      cc, [&](EmbeddingVariant v, std::uint64_t seed, PolicyNetwork&) {
        std::cerr << "trained " << to_string(v) << " seed " << seed << "\n";
      });

  fs::path out_path = output.empty()
                          ? fs::path(cfg.output_dir) / "comparison.csv"
                          : fs::path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream os(out_path);
  if (!os) throw ConfigError("config: cannot write " + out_path.string());
  ComparisonWriter writer(os);
  for (const auto& row : table) writer.write(row);
  os.flush();
  std::cout << "comparison written to " << out_path.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader-follower flocking: train, evaluate, and plot policies"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  auto* train = app.add_subcommand("train", "train a policy");
  add_common(train, train_opts);

  CommonOpts eval_opts;
  std::string eval_ckpt, eval_output;
  int eval_n = 4;
  auto* eval = app.add_subcommand("eval", "evaluate a frozen policy");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--n", eval_n, "follower count");
  eval->add_option("--output", eval_output, "metrics CSV path");

  CommonOpts roll_opts;
  std::string roll_ckpt, roll_output;
  int roll_n = 4;
  std::vector<std::string> roll_joins;
  auto* roll = app.add_subcommand("rollout", "log one frozen-policy episode");
  add_common(roll, roll_opts);
  roll->add_option("--checkpoint", roll_ckpt, "checkpoint file")->required();
  roll->add_option("--n", roll_n, "initial follower count");
  roll->add_option("--join", roll_joins,
                   "join event STEP:COUNT (repeatable)");
  roll->add_option("--output", roll_output, "trajectory CSV path");

  std::string plot_input, plot_output = "plot.svg";
  double plot_threshold = 2.0;
  auto* plot = app.add_subcommand("plot", "render trajectory CSV to SVG");
  plot->add_option("--input", plot_input, "trajectory CSV")->required();
  plot->add_option("--output", plot_output, "SVG path");
  plot->add_option("--threshold", plot_threshold,
                   "collision threshold marker [m]");

  CommonOpts cmp_opts;
  std::vector<std::uint64_t> cmp_seeds;
  std::string cmp_output;
  auto* cmp = app.add_subcommand("compare",
                                 "train and compare semp vs cnnmp variants");
  add_common(cmp, cmp_opts);
  cmp->add_option("--seeds", cmp_seeds, "training seeds (>= 3)");
  cmp->add_option("--output", cmp_output, "comparison CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(eval_opts, eval_ckpt, eval_n, eval_output);
    if (*roll) return cmd_rollout(roll_opts, roll_ckpt, roll_n, roll_joins,
                                  roll_output);
    if (*plot) return cmd_plot(plot_input, plot_output, plot_threshold);
    if (*cmp) return cmd_compare(cmp_opts, cmp_seeds, cmp_output);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
