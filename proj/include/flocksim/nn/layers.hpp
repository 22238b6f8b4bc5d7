#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flocksim/nn/linalg.hpp"
#include "flocksim/nn/tensor.hpp"
#include "flocksim/rng.hpp"

namespace flocksim::nn {

enum class Activation { relu, tanh, sigmoid, linear };

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::tanh:
      return std::tanh(z);
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::linear:
      return z;
  }
  return z;
}

/// d(activation)/dz expressed through the activation's own output.
inline double activation_grad(Activation a, double y) {
  switch (a) {
    case Activation::relu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::linear:
      return 1.0;
  }
  return 1.0;
}

/// Named view into one parameter block and its gradient accumulator.
struct ParamView {
  std::string name;
  int rows = 0;
  int cols = 1;
  double* values = nullptr;
  double* grads = nullptr;

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

/// Uniform He (relu) / Xavier (otherwise) fan-scaled initialization.
inline void init_weights(Rng& rng, Tensor2& w, Activation act) {
  const double fan_in = w.cols;
  const double fan_out = w.rows;
  const double limit = act == Activation::relu
                           ? std::sqrt(6.0 / fan_in)
                           : std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : w.data) x = rng.uniform(-limit, limit);
}

/// Fully-connected layer with single-sample forward/backward and gradient
/// accumulation. The forward caches input and output; backward must follow
/// the forward it refers to.
class DenseLayer {
 public:
  DenseLayer(std::string name, int in, int out, Activation act)
      : name_(std::move(name)),
        act_(act),
        w_(out, in),
        b_(out, 0.0),
        gw_(out, in),
        gb_(out, 0.0),
        x_(in, 0.0),
        y_(out, 0.0),
        dz_(out, 0.0),
        dx_(in, 0.0) {}

  void init(Rng& rng) { init_weights(rng, w_, act_); }

  int in_size() const { return w_.cols; }
  int out_size() const { return w_.rows; }
  Activation activation() const { return act_; }

  std::span<const double> forward(std::span<const double> x) {
    if (static_cast<int>(x.size()) != w_.cols) {
      throw std::invalid_argument(name_ + ": input size mismatch");
    }
    std::copy(x.begin(), x.end(), x_.begin());
    affine(w_.data.data(), b_.data(), x_.data(), y_.data(), w_.rows, w_.cols);
    for (double& v : y_) v = activate(act_, v);
    return y_;
  }

  /// Consumes dL/d(output), accumulates dL/dW and dL/db, returns dL/d(input).
  std::span<const double> backward(std::span<const double> upstream) {
    if (static_cast<int>(upstream.size()) != w_.rows) {
      throw std::invalid_argument(name_ + ": upstream size mismatch");
    }
    for (int o = 0; o < w_.rows; ++o) {
      dz_[o] = upstream[o] * activation_grad(act_, y_[o]);
    }
    axpy(1.0, dz_.data(), gb_.data(), w_.rows);
    outer_accumulate(gw_.data.data(), dz_.data(), x_.data(), w_.rows, w_.cols);
    matvec_transposed(w_.data.data(), dz_.data(), dx_.data(), w_.rows, w_.cols);
    return dx_;
  }

  void zero_grads() {
    gw_.fill(0.0);
    std::fill(gb_.begin(), gb_.end(), 0.0);
  }

  void collect_params(std::vector<ParamView>& out) {
    out.push_back({name_ + "/weights", w_.rows, w_.cols, w_.data.data(),
                   gw_.data.data()});
    out.push_back({name_ + "/biases", w_.rows, 1, b_.data(), gb_.data()});
  }

  std::span<const double> cached_output() const { return y_; }

 private:
  std::string name_;
  Activation act_;
  Tensor2 w_;
  std::vector<double> b_;
  Tensor2 gw_;
  std::vector<double> gb_;
  std::vector<double> x_, y_, dz_, dx_;
};

/// Per-entity convolution: one bank of filters applied identically to every
/// entity row, so each output row depends on exactly one input row.
class EntityConvLayer {
 public:
  EntityConvLayer(std::string name, int in_width, int filters, Activation act)
      : name_(std::move(name)),
        act_(act),
        w_(filters, in_width),
        b_(filters, 0.0),
        gw_(filters, in_width),
        gb_(filters, 0.0),
        dz_(filters, 0.0) {}

  void init(Rng& rng) { init_weights(rng, w_, act_); }

  int in_width() const { return w_.cols; }
  int filters() const { return w_.rows; }

  const Tensor2& forward(const Tensor2& in) {
    if (in.cols != w_.cols) {
      throw std::invalid_argument(name_ + ": input width mismatch");
    }
    x_ = in;
    y_.resize(in.rows, w_.rows);
    for (int e = 0; e < in.rows; ++e) {
      affine(w_.data.data(), b_.data(), in.row(e), y_.row(e), w_.rows,
             w_.cols);
      double* yr = y_.row(e);
      for (int c = 0; c < w_.rows; ++c) yr[c] = activate(act_, yr[c]);
    }
    return y_;
  }

  const Tensor2& backward(const Tensor2& upstream) {
    if (upstream.rows != y_.rows || upstream.cols != y_.cols) {
      throw std::invalid_argument(name_ + ": upstream shape mismatch");
    }
    dx_.resize(x_.rows, x_.cols);
    for (int e = 0; e < x_.rows; ++e) {
      const double* ur = upstream.row(e);
      const double* yr = y_.row(e);
      for (int c = 0; c < w_.rows; ++c) {
        dz_[c] = ur[c] * activation_grad(act_, yr[c]);
      }
      axpy(1.0, dz_.data(), gb_.data(), w_.rows);
      outer_accumulate(gw_.data.data(), dz_.data(), x_.row(e), w_.rows,
                       w_.cols);
      matvec_transposed(w_.data.data(), dz_.data(), dx_.row(e), w_.rows,
                        w_.cols);
    }
    return dx_;
  }

  void zero_grads() {
    gw_.fill(0.0);
    std::fill(gb_.begin(), gb_.end(), 0.0);
  }

  void collect_params(std::vector<ParamView>& out) {
    out.push_back({name_ + "/weights", w_.rows, w_.cols, w_.data.data(),
                   gw_.data.data()});
    out.push_back({name_ + "/biases", w_.rows, 1, b_.data(), gb_.data()});
  }

 private:
  std::string name_;
  Activation act_;
  Tensor2 w_;
  std::vector<double> b_;
  Tensor2 gw_;
  std::vector<double> gb_;
  Tensor2 x_, y_, dx_;
  std::vector<double> dz_;
};

/// Squeeze-and-excitation channel attention: per-channel gates from the
/// entity-mean of each channel, applied multiplicatively to every row.
class SEBlock {
 public:
  SEBlock(std::string name, int channels, int reduction)
      : name_(std::move(name)),
        channels_(channels),
        squeeze_fc_(name_ + "/squeeze", channels,
                    squeezed_width(name_, channels, reduction),
                    Activation::relu),
        excite_fc_(name_ + "/excite", channels / reduction, channels,
                   Activation::sigmoid),
        z_(channels, 0.0),
        dgate_(channels, 0.0) {}

  void init(Rng& rng) {
    squeeze_fc_.init(rng);
    excite_fc_.init(rng);
  }

  const Tensor2& forward(const Tensor2& in) {
    if (in.cols != channels_) {
      throw std::invalid_argument(name_ + ": channel count mismatch");
    }
    x_ = in;
    for (int c = 0; c < channels_; ++c) z_[c] = 0.0;
    for (int e = 0; e < in.rows; ++e) {
      axpy(1.0, in.row(e), z_.data(), channels_);
    }
    const double inv = in.rows > 0 ? 1.0 / in.rows : 0.0;
    for (double& v : z_) v *= inv;
    const auto h = squeeze_fc_.forward(z_);
    gate_ = excite_fc_.forward(h);
    y_.resize(in.rows, channels_);
    for (int e = 0; e < in.rows; ++e) {
      const double* xr = in.row(e);
      double* yr = y_.row(e);
      for (int c = 0; c < channels_; ++c) yr[c] = xr[c] * gate_[c];
    }
    return y_;
  }

  const Tensor2& backward(const Tensor2& upstream) {
    if (upstream.rows != x_.rows || upstream.cols != channels_) {
      throw std::invalid_argument(name_ + ": upstream shape mismatch");
    }
    dx_.resize(x_.rows, channels_);
    for (int c = 0; c < channels_; ++c) dgate_[c] = 0.0;
    for (int e = 0; e < x_.rows; ++e) {
      const double* ur = upstream.row(e);
      const double* xr = x_.row(e);
      double* dr = dx_.row(e);
      for (int c = 0; c < channels_; ++c) {
        dgate_[c] += ur[c] * xr[c];
        dr[c] = ur[c] * gate_[c];
      }
    }
    const auto dz = squeeze_fc_.backward(excite_fc_.backward(dgate_));
    const double inv = x_.rows > 0 ? 1.0 / x_.rows : 0.0;
    for (int e = 0; e < x_.rows; ++e) {
      axpy(inv, dz.data(), dx_.row(e), channels_);
    }
    return dx_;
  }

  std::span<const double> gates() const { return gate_; }

  void zero_grads() {
    squeeze_fc_.zero_grads();
    excite_fc_.zero_grads();
  }

  void collect_params(std::vector<ParamView>& out) {
    squeeze_fc_.collect_params(out);
    excite_fc_.collect_params(out);
  }

 private:
  static int squeezed_width(const std::string& name, int channels,
                            int reduction) {
    if (reduction <= 0 || channels % reduction != 0) {
      throw std::invalid_argument(
          name + ": channels must be divisible by the reduction ratio");
    }
    return channels / reduction;
  }

  std::string name_;
  int channels_;
  DenseLayer squeeze_fc_;
  DenseLayer excite_fc_;
  std::vector<double> z_;
  std::span<const double> gate_;
  std::vector<double> dgate_;
  Tensor2 x_, y_, dx_;
};

/// Per-channel maximum over entity rows. Gradient routes to the first row
/// attaining each channel's maximum.
class EntityMaxPool {
 public:
  std::span<const double> forward(const Tensor2& in) {
    if (in.rows < 1) {
      throw std::invalid_argument("max_pool_entities: needs >= 1 entity row");
    }
    rows_ = in.rows;
    cols_ = in.cols;
    y_.assign(in.cols, 0.0);
    argmax_.assign(in.cols, 0);
    for (int c = 0; c < in.cols; ++c) y_[c] = in.at(0, c);
    for (int e = 1; e < in.rows; ++e) {
      const double* r = in.row(e);
      for (int c = 0; c < in.cols; ++c) {
        if (r[c] > y_[c]) {
          y_[c] = r[c];
          argmax_[c] = e;
        }
      }
    }
    return y_;
  }

  const Tensor2& backward(std::span<const double> upstream) {
    if (static_cast<int>(upstream.size()) != cols_) {
      throw std::invalid_argument("max_pool_entities: upstream size mismatch");
    }
    dx_.resize(rows_, cols_);
    for (int c = 0; c < cols_; ++c) dx_.at(argmax_[c], c) = upstream[c];
    return dx_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> y_;
  std::vector<int> argmax_;
  Tensor2 dx_;
};

/// Free-function form of the pooling reduction, for callers that only need
/// the forward value.
inline std::vector<double> max_pool_entities(const Tensor2& in) {
  EntityMaxPool pool;
  const auto out = pool.forward(in);
  return {out.begin(), out.end()};
}

}  // namespace flocksim::nn
