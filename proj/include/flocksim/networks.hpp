#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flocksim/environment.hpp"
#include "flocksim/nn/adam.hpp"
#include "flocksim/nn/layers.hpp"
#include "flocksim/nn/tensor.hpp"

namespace flocksim {

/// Embedding variants: the full attention pipeline, or the ablation with
/// both SE blocks removed.
enum class EmbeddingVariant { semp, cnnmp };

inline std::string to_string(EmbeddingVariant v) {
  return v == EmbeddingVariant::semp ? "semp" : "cnnmp";
}

inline EmbeddingVariant embedding_variant_from_string(const std::string& s) {
  if (s == "SEMP" || s == "semp") return EmbeddingVariant::semp;
  if (s == "CNNMP" || s == "cnnmp") return EmbeddingVariant::cnnmp;
  throw std::invalid_argument("unknown embedding variant: " + s);
}

struct EmbeddingConfig {
  int conv1_filters = 32;
  int conv2_filters = 64;  // embedding length
  int se_reduction = 8;
  EmbeddingVariant variant = EmbeddingVariant::semp;

  void validate() const {
    if (conv1_filters < 1 || conv2_filters < 1) {
      throw std::invalid_argument("embedding: filter counts must be >= 1");
    }
    if (variant == EmbeddingVariant::semp &&
        (conv1_filters % se_reduction != 0 ||
         conv2_filters % se_reduction != 0)) {
      throw std::invalid_argument(
          "embedding: filter counts must be divisible by se_reduction");
    }
  }
};

struct NetworkConfig {
  EmbeddingConfig embedding;
  int leader_branch_units = 64;  // dense width on the ego-leader state
  int merge_units1 = 128;
  int merge_units2 = 64;
  // Fixed gain and offset on the critic head so value magnitudes on the
  // order of return sums stay reachable at small learning rates: the head
  // learns deviation around a prior mean rather than traversing to it.
  double value_scale = 1.0;
  double value_offset = 0.0;

  void validate() const {
    embedding.validate();
    if (leader_branch_units < 1 || merge_units1 < 1 || merge_units2 < 1) {
      throw std::invalid_argument("network: layer widths must be >= 1");
    }
    if (!(value_scale > 0.0)) {
      throw std::invalid_argument("network: value_scale must be positive");
    }
    if (!std::isfinite(value_offset)) {
      throw std::invalid_argument("network: value_offset must be finite");
    }
  }
};

/// Input scaling bounds: positions by the annulus outer radius, angles by pi,
/// speeds affinely onto [-1, 1].
struct NormBounds {
  double pos_scale = 65.0;
  double v_min = 12.0;
  double v_max = 18.0;

  double speed(double v) const {
    const double mid = 0.5 * (v_min + v_max);
    const double half = 0.5 * (v_max - v_min);
    return (v - mid) / half;
  }
};

inline std::array<double, 9> normalize_joint_e(const JointStateE& se,
                                               const NormBounds& b) {
  return {se.rel_x / b.pos_scale,
          se.rel_y / b.pos_scale,
          se.heading_diff / kPi,
          se.ego_roll / kPi,
          se.leader_roll / kPi,
          se.leader_roll_setpoint / kPi,
          b.speed(se.ego_speed),
          b.speed(se.leader_speed),
          b.speed(se.leader_speed_setpoint)};
}

inline void normalize_joint_o(const JointStateO& so, const NormBounds& b,
                              nn::Tensor2& out) {
  out.resize(so.count(), JointStateO::kRowWidth);
  for (int e = 0; e < so.count(); ++e) {
    const auto& r = so.rows[e];
    double* o = out.row(e);
    o[0] = r[0] / b.pos_scale;
    o[1] = r[1] / b.pos_scale;
    o[2] = r[2] / kPi;
    o[3] = r[3] / kPi;
    o[4] = b.speed(r[4]);
  }
}

/// Variable-length set embedding: per-entity convolutions (filter width 5,
/// then width = conv1 filter count), optional SE attention after each, and a
/// per-channel max over entities into a fixed-length vector. The empty input
/// embeds to the zero vector.
class SempEmbedding {
 public:
  SempEmbedding(const std::string& name, const EmbeddingConfig& cfg)
      : cfg_(cfg),
        conv1_(name + "/conv1", JointStateO::kRowWidth, cfg.conv1_filters,
               nn::Activation::relu),
        conv2_(name + "/conv2", cfg.conv1_filters, cfg.conv2_filters,
               nn::Activation::relu),
        zero_(cfg.conv2_filters, 0.0) {
    cfg_.validate();
    if (cfg_.variant == EmbeddingVariant::semp) {
      se1_.emplace(name + "/se1", cfg.conv1_filters, cfg.se_reduction);
      se2_.emplace(name + "/se2", cfg.conv2_filters, cfg.se_reduction);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (se1_) se1_->init(rng);
    if (se2_) se2_->init(rng);
  }

  int output_size() const { return cfg_.conv2_filters; }
  const EmbeddingConfig& config() const { return cfg_; }

  std::span<const double> forward(const nn::Tensor2& rows) {
    if (rows.rows == 0) {
      last_empty_ = true;
      return zero_;
    }
    if (rows.cols != JointStateO::kRowWidth) {
      throw std::invalid_argument("embedding: rows must have width 5");
    }
    last_empty_ = false;
    const nn::Tensor2* t = &conv1_.forward(rows);
    if (se1_) t = &se1_->forward(*t);
    t = &conv2_.forward(*t);
    if (se2_) t = &se2_->forward(*t);
    return pool_.forward(*t);
  }

  /// No-op after an empty-input forward.
  void backward(std::span<const double> upstream) {
    if (last_empty_) return;
    const nn::Tensor2* t = &pool_.backward(upstream);
    if (se2_) t = &se2_->backward(*t);
    t = &conv2_.backward(*t);
    if (se1_) t = &se1_->backward(*t);
    conv1_.backward(*t);
  }

  void zero_grads() {
    conv1_.zero_grads();
    conv2_.zero_grads();
    if (se1_) se1_->zero_grads();
    if (se2_) se2_->zero_grads();
  }

  void collect_params(std::vector<nn::ParamView>& out) {
    conv1_.collect_params(out);
    if (se1_) se1_->collect_params(out);
    conv2_.collect_params(out);
    if (se2_) se2_->collect_params(out);
  }

 private:
  EmbeddingConfig cfg_;
  nn::EntityConvLayer conv1_;
  nn::EntityConvLayer conv2_;
  std::optional<nn::SEBlock> se1_;
  std::optional<nn::SEBlock> se2_;
  nn::EntityMaxPool pool_;
  std::vector<double> zero_;
  bool last_empty_ = true;
};

enum class HeadKind { actor, critic };

/// Shared actor/critic trunk: a dense branch on the ego-leader state, the
/// set embedding on the other-followers state, concatenation, then three
/// dense layers. Heads differ only in width and activation: the actor ends
/// in a 2-unit tanh layer, the critic in a 1-unit linear layer.
class PolicyNetwork {
 public:
  PolicyNetwork(const NetworkConfig& cfg, HeadKind head,
                const NormBounds& bounds, std::uint64_t init_seed)
      : cfg_(cfg),
        head_kind_(head),
        bounds_(bounds),
        name_(head == HeadKind::actor ? "actor" : "critic"),
        leader_fc_(name_ + "/leader_state_fc", 9, cfg.leader_branch_units,
                   nn::Activation::relu),
        embedding_(name_ + "/embedding", cfg.embedding),
        merge1_(name_ + "/merge1",
                cfg.leader_branch_units + cfg.embedding.conv2_filters,
                cfg.merge_units1, nn::Activation::relu),
        merge2_(name_ + "/merge2", cfg.merge_units1, cfg.merge_units2,
                nn::Activation::relu),
        head_(name_ + "/head", cfg.merge_units2,
              head == HeadKind::actor ? 2 : 1,
              head == HeadKind::actor ? nn::Activation::tanh
                                      : nn::Activation::linear),
        concat_(cfg.leader_branch_units + cfg.embedding.conv2_filters, 0.0) {
    cfg_.validate();
    Rng rng(init_seed);
    leader_fc_.init(rng);
    embedding_.init(rng);
    merge1_.init(rng);
    merge2_.init(rng);
    head_.init(rng);
    leader_fc_.collect_params(params_);
    embedding_.collect_params(params_);
    merge1_.collect_params(params_);
    merge2_.collect_params(params_);
    head_.collect_params(params_);
  }

  HeadKind head_kind() const { return head_kind_; }
  const NetworkConfig& config() const { return cfg_; }
  const NormBounds& bounds() const { return bounds_; }
  int output_size() const { return head_kind_ == HeadKind::actor ? 2 : 1; }

  std::span<const double> forward(const JointStateE& se,
                                  const JointStateO& so) {
    const auto xe = normalize_joint_e(se, bounds_);
    normalize_joint_o(so, bounds_, so_scratch_);
    for (double v : xe) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(name_ + ": non-finite network input");
      }
    }
    for (double v : so_scratch_.data) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(name_ + ": non-finite network input");
      }
    }
    const auto he = leader_fc_.forward(xe);
    const auto hm = embedding_.forward(so_scratch_);
    std::copy(he.begin(), he.end(), concat_.begin());
    std::copy(hm.begin(), hm.end(), concat_.begin() + he.size());
    const auto h1 = merge1_.forward(concat_);
    const auto h2 = merge2_.forward(h1);
    const auto out = head_.forward(h2);
    for (double v : out) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(name_ + ": non-finite network output");
      }
    }
    return out;
  }

  /// upstream = dL/d(head output); accumulates parameter gradients.
  void backward(std::span<const double> upstream) {
    const auto dh2 = head_.backward(upstream);
    const auto dh1 = merge2_.backward(dh2);
    const auto dcat = merge1_.backward(dh1);
    leader_fc_.backward(dcat.subspan(0, cfg_.leader_branch_units));
    embedding_.backward(dcat.subspan(cfg_.leader_branch_units));
  }

  /// Actor-head outputs scaled onto the action bounds.
  Action act(const JointStateE& se, const JointStateO& so) {
    if (head_kind_ != HeadKind::actor) {
      throw std::logic_error("act() requires an actor network");
    }
    const auto out = forward(se, so);
    return {Action::kRollMax * out[0], Action::kSpeedMax * out[1]};
  }

  /// Scaled critic output; gradients through it must chain value_scale().
  /// The offset is a constant and contributes no gradient.
  double value(const JointStateE& se, const JointStateO& so) {
    if (head_kind_ != HeadKind::critic) {
      throw std::logic_error("value() requires a critic network");
    }
    return cfg_.value_scale * forward(se, so)[0] + cfg_.value_offset;
  }

  double value_scale() const {
    return head_kind_ == HeadKind::critic ? cfg_.value_scale : 1.0;
  }

  void zero_grads() {
    leader_fc_.zero_grads();
    embedding_.zero_grads();
    merge1_.zero_grads();
    merge2_.zero_grads();
    head_.zero_grads();
  }

  const std::vector<nn::ParamView>& params() { return params_; }

 private:
  NetworkConfig cfg_;
  HeadKind head_kind_;
  NormBounds bounds_;
  std::string name_;
  nn::DenseLayer leader_fc_;
  SempEmbedding embedding_;
  nn::DenseLayer merge1_;
  nn::DenseLayer merge2_;
  nn::DenseLayer head_;
  std::vector<double> concat_;
  nn::Tensor2 so_scratch_;
  std::vector<nn::ParamView> params_;
};

inline Action action_from_head(std::span<const double> out) {
  return {Action::kRollMax * out[0], Action::kSpeedMax * out[1]};
}

}  // namespace flocksim
