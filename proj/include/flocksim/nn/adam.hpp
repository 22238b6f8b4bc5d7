#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "flocksim/nn/layers.hpp"

namespace flocksim::nn {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step_count = 0;
  std::vector<double> m;  // first moments
  std::vector<double> v;  // second moments
};

namespace detail {

/// Elementwise bias-corrected Adam update over one contiguous block.
/// step_count must already be incremented for this step.
inline void adam_update_block(const AdamConfig& cfg, long step_count,
                              double* p, const double* g, double* m, double* v,
                              size_t n) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, step_count);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step_count);
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i])) {
      throw std::runtime_error("adam: non-finite gradient");
    }
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace detail

/// One Adam step over a flat parameter array. state.m/v are sized on first
/// use and must keep matching afterwards.
inline void adam_step(AdamState& state, std::span<double> params,
                      std::span<const double> grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: param/grad size mismatch");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: moment size mismatch");
  }
  ++state.step_count;
  detail::adam_update_block(state.cfg, state.step_count, params.data(),
                            grads.data(), state.m.data(), state.v.data(),
                            params.size());
}

/// Adam over a network's parameter views, with one shared step counter and
/// flat moment arrays laid out in view order.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) { state_.cfg = cfg; }

  void initialize(const std::vector<ParamView>& views) {
    size_t total = 0;
    for (const auto& v : views) total += v.size();
    state_.m.assign(total, 0.0);
    state_.v.assign(total, 0.0);
    state_.step_count = 0;
  }

  void step(const std::vector<ParamView>& views) {
    ++state_.step_count;
    size_t offset = 0;
    for (const auto& view : views) {
      if (offset + view.size() > state_.m.size()) {
        throw std::invalid_argument("adam: views exceed moment storage");
      }
      detail::adam_update_block(state_.cfg, state_.step_count, view.values,
                                view.grads, state_.m.data() + offset,
                                state_.v.data() + offset, view.size());
      offset += view.size();
    }
    if (offset != state_.m.size()) {
      throw std::invalid_argument("adam: views do not cover moment storage");
    }
  }

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
};

}  // namespace flocksim::nn
