#include "flocksim/networks.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace flocksim {
namespace {

constexpr double kTol = 1e-9;

NormBounds bounds() { return NormBounds{65.0, 12.0, 18.0}; }

JointStateE random_se(Rng& rng) {
  JointStateE se;
  se.rel_x = rng.uniform(-150.0, 150.0);
  se.rel_y = rng.uniform(-150.0, 150.0);
  se.heading_diff = rng.uniform(-kPi, kPi);
  se.ego_roll = rng.uniform(-0.5, 0.5);
  se.leader_roll = rng.uniform(-0.5, 0.5);
  se.leader_roll_setpoint = rng.uniform(-0.5, 0.5);
  se.ego_speed = rng.uniform(12.0, 18.0);
  se.leader_speed = rng.uniform(12.0, 18.0);
  se.leader_speed_setpoint = rng.uniform(12.0, 18.0);
  return se;
}

JointStateO random_so(Rng& rng, int rows) {
  JointStateO so;
  for (int i = 0; i < rows; ++i) {
    so.rows.push_back({rng.uniform(-150.0, 150.0), rng.uniform(-150.0, 150.0),
                       rng.uniform(-kPi, kPi), rng.uniform(-0.5, 0.5),
                       rng.uniform(12.0, 18.0)});
  }
  return so;
}

JointStateO permuted(const JointStateO& so, Rng& rng) {
  std::vector<int> order(so.rows.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  }
  JointStateO out;
  for (int idx : order) out.rows.push_back(so.rows[idx]);
  return out;
}

NetworkConfig small_config(EmbeddingVariant variant, Rng& rng) {
  NetworkConfig cfg;
  cfg.embedding.variant = variant;
  cfg.embedding.se_reduction = rng.uniform_int(1, 2);
  cfg.embedding.conv1_filters = cfg.embedding.se_reduction *
                                rng.uniform_int(2, 4);
  cfg.embedding.conv2_filters = cfg.embedding.se_reduction *
                                rng.uniform_int(2, 4);
  cfg.leader_branch_units = rng.uniform_int(2, 6);
  cfg.merge_units1 = rng.uniform_int(2, 8);
  cfg.merge_units2 = rng.uniform_int(2, 6);
  return cfg;
}

TEST(Normalize, JointEScaling) {
  JointStateE se;
  se.rel_x = 65.0;
  se.heading_diff = -kPi;
  se.ego_speed = 15.0;
  se.leader_speed = 18.0;
  se.leader_speed_setpoint = 12.0;
  const auto x = normalize_joint_e(se, bounds());
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 0.0);
  EXPECT_DOUBLE_EQ(x[2], -1.0);
  EXPECT_DOUBLE_EQ(x[6], 0.0);
  EXPECT_DOUBLE_EQ(x[7], 1.0);
  EXPECT_DOUBLE_EQ(x[8], -1.0);
}

TEST(Normalize, JointOScaling) {
  JointStateO so;
  so.rows.push_back({65.0, -32.5, kPi / 2.0, -kPi / 6.0, 13.5});
  nn::Tensor2 t;
  normalize_joint_o(so, bounds(), t);
  ASSERT_EQ(t.rows, 1);
  ASSERT_EQ(t.cols, 5);
  EXPECT_DOUBLE_EQ(t.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.at(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(t.at(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(t.at(0, 3), -1.0 / 6.0);
  EXPECT_DOUBLE_EQ(t.at(0, 4), -0.5);
}

TEST(EmbeddingVariantNames, RoundTrip) {
  EXPECT_EQ(to_string(EmbeddingVariant::semp), "semp");
  EXPECT_EQ(to_string(EmbeddingVariant::cnnmp), "cnnmp");
  EXPECT_EQ(embedding_variant_from_string("semp"), EmbeddingVariant::semp);
  EXPECT_EQ(embedding_variant_from_string("cnnmp"), EmbeddingVariant::cnnmp);
  EXPECT_THROW(embedding_variant_from_string("lstm"), std::invalid_argument);
}

TEST(EmbeddingConfig, SempRequiresDivisibleFilters) {
  EmbeddingConfig cfg;
  cfg.conv1_filters = 6;
  cfg.se_reduction = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.variant = EmbeddingVariant::cnnmp;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(SempEmbedding, FixedOutputLengthForAnyRowCount) {
  EmbeddingConfig cfg;  // defaults: conv2 = 64
  SempEmbedding embed("embed", cfg);
  Rng rng(1);
  embed.init(rng);
  NormBounds b = bounds();
  for (int rows : {0, 1, 9}) {
    JointStateO so = random_so(rng, rows);
    nn::Tensor2 t;
    normalize_joint_o(so, b, t);
    const auto out = embed.forward(t);
    ASSERT_EQ(out.size(), 64u);
  }
}

TEST(SempEmbedding, EmptyInputGivesZeroVector) {
  EmbeddingConfig cfg;
  SempEmbedding embed("embed", cfg);
  Rng rng(2);
  embed.init(rng);
  nn::Tensor2 t(0, 5);
  const auto out = embed.forward(t);
  for (double v : out) EXPECT_EQ(v, 0.0);
  // Backward after an empty forward is a no-op, not an error.
  std::vector<double> up(64, 1.0);
  embed.zero_grads();
  embed.backward(up);
  std::vector<nn::ParamView> views;
  embed.collect_params(views);
  for (const auto& v : views) {
    for (size_t i = 0; i < v.size(); ++i) ASSERT_EQ(v.grads[i], 0.0);
  }
}

TEST(SempEmbedding, PermutationInvariant1000Instances) {
  Rng rng(77);
  NormBounds b = bounds();
  for (int trial = 0; trial < 1000; ++trial) {
    const EmbeddingVariant variant =
        trial % 2 == 0 ? EmbeddingVariant::semp : EmbeddingVariant::cnnmp;
    NetworkConfig net = small_config(variant, rng);
    SempEmbedding embed("embed", net.embedding);
    embed.init(rng);
    const JointStateO so = random_so(rng, rng.uniform_int(2, 9));
    const JointStateO so_perm = permuted(so, rng);
    nn::Tensor2 t;
    normalize_joint_o(so, b, t);
    const auto out = embed.forward(t);
    std::vector<double> base(out.begin(), out.end());
    normalize_joint_o(so_perm, b, t);
    const auto out_perm = embed.forward(t);
    for (size_t c = 0; c < base.size(); ++c) {
      ASSERT_NEAR(base[c], out_perm[c], kTol);
    }
  }
}

TEST(SempEmbedding, CnnmpHasNoAttentionParameters) {
  EmbeddingConfig cfg;
  cfg.variant = EmbeddingVariant::cnnmp;
  SempEmbedding embed("embed", cfg);
  std::vector<nn::ParamView> views;
  embed.collect_params(views);
  for (const auto& v : views) {
    EXPECT_EQ(v.name.find("/se"), std::string::npos) << v.name;
  }
  EXPECT_EQ(views.size(), 4u);  // two conv layers, weights + biases each

  cfg.variant = EmbeddingVariant::semp;
  SempEmbedding semp("embed", cfg);
  views.clear();
  semp.collect_params(views);
  EXPECT_EQ(views.size(), 12u);  // plus two SE blocks, two dense layers each
}

TEST(PolicyNetwork, ActorActionsBoundedForRandomNets) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    NetworkConfig net = small_config(EmbeddingVariant::semp, rng);
    PolicyNetwork actor(net, HeadKind::actor, bounds(), rng.raw());
    const JointStateE se = random_se(rng);
    const JointStateO so = random_so(rng, rng.uniform_int(0, 9));
    const Action a = actor.act(se, so);
    ASSERT_LE(std::abs(a.roll_delta), Action::kRollMax);
    ASSERT_LE(std::abs(a.speed_delta), Action::kSpeedMax);
    ASSERT_TRUE(a.in_bounds());
  }
}

TEST(PolicyNetwork, ZeroParametersGiveZeroOutputs) {
  NetworkConfig net;
  PolicyNetwork actor(net, HeadKind::actor, bounds(), 1);
  PolicyNetwork critic(net, HeadKind::critic, bounds(), 2);
  for (auto& view : actor.params()) {
    std::fill(view.values, view.values + view.size(), 0.0);
  }
  for (auto& view : critic.params()) {
    std::fill(view.values, view.values + view.size(), 0.0);
  }
  Rng rng(3);
  const JointStateE se = random_se(rng);
  const JointStateO so = random_so(rng, 4);
  const Action a = actor.act(se, so);
  EXPECT_DOUBLE_EQ(a.roll_delta, 0.0);
  EXPECT_DOUBLE_EQ(a.speed_delta, 0.0);
  EXPECT_DOUBLE_EQ(critic.value(se, so), 0.0);
}

TEST(PolicyNetwork, PermutationInvariant1000Instances) {
  Rng rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const EmbeddingVariant variant =
        trial % 2 == 0 ? EmbeddingVariant::semp : EmbeddingVariant::cnnmp;
    NetworkConfig net = small_config(variant, rng);
    const bool is_actor = trial % 4 < 2;
    PolicyNetwork policy(net, is_actor ? HeadKind::actor : HeadKind::critic,
                         bounds(), rng.raw());
    const JointStateE se = random_se(rng);
    const JointStateO so = random_so(rng, rng.uniform_int(2, 9));
    const JointStateO so_perm = permuted(so, rng);
    if (is_actor) {
      const Action a = policy.act(se, so);
      const Action b = policy.act(se, so_perm);
      ASSERT_NEAR(a.roll_delta, b.roll_delta, kTol);
      ASSERT_NEAR(a.speed_delta, b.speed_delta, kTol);
    } else {
      ASSERT_NEAR(policy.value(se, so), policy.value(se, so_perm), kTol);
    }
  }
}

TEST(PolicyNetwork, CriticValueScaleAndOffset) {
  NetworkConfig net;
  Rng rng(5);
  const JointStateE se = random_se(rng);
  const JointStateO so = random_so(rng, 3);
  PolicyNetwork base(net, HeadKind::critic, bounds(), 9);
  net.value_scale = 16.0;
  net.value_offset = -3000.0;
  PolicyNetwork scaled(net, HeadKind::critic, bounds(), 9);
  EXPECT_NEAR(scaled.value(se, so), 16.0 * base.value(se, so) - 3000.0,
              1e-9 * std::abs(scaled.value(se, so)));
  EXPECT_DOUBLE_EQ(base.value_scale(), 1.0);
  EXPECT_DOUBLE_EQ(scaled.value_scale(), 16.0);
}

TEST(PolicyNetwork, HeadKindGuards) {
  NetworkConfig net;
  PolicyNetwork actor(net, HeadKind::actor, bounds(), 1);
  PolicyNetwork critic(net, HeadKind::critic, bounds(), 2);
  Rng rng(6);
  const JointStateE se = random_se(rng);
  const JointStateO so = random_so(rng, 2);
  EXPECT_THROW(actor.value(se, so), std::logic_error);
  EXPECT_THROW(critic.act(se, so), std::logic_error);
}

TEST(PolicyNetwork, ValueSensitiveToLeaderDistance) {
  NetworkConfig net;
  PolicyNetwork critic(net, HeadKind::critic, bounds(), 11);
  Rng rng(7);
  JointStateE near = random_se(rng);
  near.rel_x = -52.5;
  near.rel_y = 0.0;
  JointStateE far = near;
  far.rel_x = -300.0;
  const JointStateO so = random_so(rng, 2);
  EXPECT_NE(critic.value(near, so), critic.value(far, so));
}

// End-to-end gradient checks through the full trunk for both heads, loss
// formed as a fixed linear probe of the outputs. Biases are randomized away
// from their zero init: a dead relu row otherwise pins downstream
// pre-activations exactly on the kink, where finite differences diverge
// from the one-sided analytic derivative.
void randomize_biases(PolicyNetwork& net, Rng& rng) {
  for (const auto& view : net.params()) {
    if (view.name.ends_with("/biases")) {
      for (size_t i = 0; i < view.size(); ++i) {
        view.values[i] = rng.uniform(-0.1, 0.1);
      }
    }
  }
}

TEST(PolicyNetwork, EndToEndGradientsMatchFiniteDifferences) {
  Rng rng(500);
  const double h = 1e-5;
  for (int trial = 0; trial < 120; ++trial) {
    const EmbeddingVariant variant =
        trial % 2 == 0 ? EmbeddingVariant::semp : EmbeddingVariant::cnnmp;
    NetworkConfig net = small_config(variant, rng);
    const bool is_actor = trial % 4 < 2;
    net.value_scale = is_actor ? 1.0 : 8.0;
    PolicyNetwork policy(net, is_actor ? HeadKind::actor : HeadKind::critic,
                         bounds(), rng.raw());
    randomize_biases(policy, rng);
    const JointStateE se = random_se(rng);
    const JointStateO so = random_so(rng, rng.uniform_int(0, 4));
    const int width = is_actor ? 2 : 1;
    std::vector<double> c(width);
    for (double& x : c) x = rng.uniform(-1.0, 1.0);

    auto loss = [&]() {
      const auto out = policy.forward(se, so);
      double l = 0.0;
      for (int i = 0; i < width; ++i) l += c[i] * out[i];
      return l;
    };
    loss();
    policy.zero_grads();
    policy.backward(c);
    int checked = 0;
    for (auto& view : policy.params()) {
      const size_t stride = std::max<size_t>(1, view.size() / 3);
      for (size_t i = 0; i < view.size(); i += stride) {
        const double orig = view.values[i];
        view.values[i] = orig + h;
        const double lp = loss();
        view.values[i] = orig - h;
        const double lm = loss();
        view.values[i] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = view.grads[i];
        const double rel =
            std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        ASSERT_LT(rel, 1e-4) << view.name << "[" << i << "]";
        ++checked;
      }
    }
    ASSERT_GT(checked, 10);
  }
}

TEST(PolicyNetwork, NonFiniteInputRejected) {
  // Rejected at the input boundary: relu trunks can mask inf downstream.
  NetworkConfig net;
  PolicyNetwork critic(net, HeadKind::critic, bounds(), 1);
  JointStateE se;
  se.rel_x = std::numeric_limits<double>::infinity();
  JointStateO so;
  EXPECT_THROW(critic.forward(se, so), std::runtime_error);
}

TEST(PolicyNetwork, ParamNamesCarryHeadPrefix) {
  NetworkConfig net;
  PolicyNetwork actor(net, HeadKind::actor, bounds(), 1);
  for (const auto& v : actor.params()) {
    EXPECT_EQ(v.name.rfind("actor/", 0), 0u) << v.name;
  }
  PolicyNetwork critic(net, HeadKind::critic, bounds(), 1);
  for (const auto& v : critic.params()) {
    EXPECT_EQ(v.name.rfind("critic/", 0), 0u) << v.name;
  }
}

}  // namespace
}  // namespace flocksim
