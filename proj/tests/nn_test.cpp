#include "flocksim/nn/adam.hpp"
#include "flocksim/nn/layers.hpp"
#include "flocksim/nn/tensor.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace flocksim::nn {
namespace {

constexpr double kFdStep = 1e-5;

double rel_err(double fd, double an) {
  return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
}

// Central finite differences of loss() with respect to every parameter of the
// layer, compared against the gradients accumulated by one backward pass.
void check_param_grads(std::vector<ParamView> views,
                       const std::function<double()>& loss, double tol) {
  for (auto& view : views) {
    for (size_t i = 0; i < view.size(); ++i) {
      const double orig = view.values[i];
      view.values[i] = orig + kFdStep;
      const double lp = loss();
      view.values[i] = orig - kFdStep;
      const double lm = loss();
      view.values[i] = orig;
      const double fd = (lp - lm) / (2.0 * kFdStep);
      ASSERT_LT(rel_err(fd, view.grads[i]), tol)
          << view.name << "[" << i << "] fd=" << fd
          << " analytic=" << view.grads[i];
    }
  }
}

std::vector<double> random_vec(Rng& rng, int n, double lo = -1.0,
                               double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor2 random_tensor(Rng& rng, int rows, int cols) {
  Tensor2 t(rows, cols);
  for (double& x : t.data) x = rng.uniform(-1.0, 1.0);
  return t;
}

// ---------------------------------------------------------------------------
// DenseLayer

TEST(DenseLayer, IdentityPassthrough) {
  DenseLayer fc("fc", 3, 3, Activation::linear);
  std::vector<ParamView> views;
  fc.collect_params(views);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) views[0].values[r * 3 + c] = r == c ? 1.0 : 0.0;
  }
  const std::vector<double> x = {0.3, -1.2, 2.5};
  const auto y = fc.forward(x);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);

  const std::vector<double> up = {1.0, 2.0, 3.0};
  const auto dx = fc.backward(up);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(dx[i], up[i]);
}

TEST(DenseLayer, ZeroWeightsSigmoidGivesHalf) {
  DenseLayer fc("fc", 4, 2, Activation::sigmoid);
  const auto y = fc.forward(std::vector<double>{1.0, -2.0, 3.0, 0.5});
  for (double v : y) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(DenseLayer, HandComputedRelu) {
  DenseLayer fc("fc", 2, 2, Activation::relu);
  std::vector<ParamView> views;
  fc.collect_params(views);
  const double w[4] = {1.0, 2.0, 3.0, 4.0};
  std::copy(w, w + 4, views[0].values);
  const auto y = fc.forward(std::vector<double>{1.0, 1.0});
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 7.0);
}

TEST(DenseLayer, ZeroUpstreamZeroGrads) {
  Rng rng(5);
  DenseLayer fc("fc", 3, 4, Activation::tanh);
  fc.init(rng);
  fc.forward(random_vec(rng, 3));
  fc.zero_grads();
  fc.backward(std::vector<double>(4, 0.0));
  std::vector<ParamView> views;
  fc.collect_params(views);
  for (const auto& v : views) {
    for (size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.grads[i], 0.0);
  }
}

TEST(DenseLayer, GradientsMatchFiniteDifferences) {
  Rng rng(100);
  const Activation acts[] = {Activation::relu, Activation::tanh,
                             Activation::sigmoid, Activation::linear};
  for (int trial = 0; trial < 40; ++trial) {
    const int in = rng.uniform_int(1, 8);
    const int out = rng.uniform_int(1, 8);
    DenseLayer fc("fc", in, out, acts[trial % 4]);
    fc.init(rng);
    const auto x = random_vec(rng, in);
    const auto c = random_vec(rng, out);
    auto loss = [&]() {
      const auto y = fc.forward(x);
      double l = 0.0;
      for (int i = 0; i < out; ++i) l += c[i] * y[i];
      return l;
    };
    loss();
    fc.zero_grads();
    const auto dx = fc.backward(c);
    std::vector<ParamView> views;
    fc.collect_params(views);
    const double tol = trial % 4 == 0 ? 1e-4 : 1e-6;
    check_param_grads(views, loss, tol);
    std::vector<double> xm(x.begin(), x.end());
    for (int i = 0; i < in; ++i) {
      const double orig = xm[i];
      auto loss_x = [&]() {
        const auto y = fc.forward(xm);
        double l = 0.0;
        for (int j = 0; j < out; ++j) l += c[j] * y[j];
        return l;
      };
      xm[i] = orig + kFdStep;
      const double lp = loss_x();
      xm[i] = orig - kFdStep;
      const double lm = loss_x();
      xm[i] = orig;
      ASSERT_LT(rel_err((lp - lm) / (2.0 * kFdStep), dx[i]), tol);
    }
  }
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, FirstStepMagnitude) {
  AdamState state;
  std::vector<double> p = {1.0};
  const std::vector<double> g = {0.1};
  adam_step(state, p, g);
  // Bias-corrected first step: mhat = g, vhat = g*g, so the update is
  // -lr * g / (|g| + eps) = -lr on the descent direction.
  EXPECT_NEAR(p[0], 1.0 - 0.001 * (0.1 / (0.1 + 1e-8)), 1e-15);
}

TEST(Adam, ZeroGradientNoChange) {
  AdamState state;
  std::vector<double> p = {1.0, -2.0, 3.0};
  adam_step(state, p, std::vector<double>{0.0, 0.0, 0.0});
  adam_step(state, p, std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], -2.0);
  EXPECT_DOUBLE_EQ(p[2], 3.0);
}

TEST(Adam, MatchesScalarReference) {
  AdamState state;
  std::vector<double> p = {0.5};
  const double g = -0.3;
  adam_step(state, p, std::vector<double>{g});
  adam_step(state, p, std::vector<double>{g});

  // Scalar reference, two steps with constant gradient.
  double m = 0.0, v = 0.0, x = 0.5;
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    x -= 0.001 * mhat / (std::sqrt(vhat) + 1e-8);
  }
  EXPECT_NEAR(p[0], x, 1e-12);
}

TEST(Adam, NonFiniteGradientRejected) {
  AdamState state;
  std::vector<double> p = {1.0};
  EXPECT_THROW(adam_step(state, p, std::vector<double>{
                                       std::numeric_limits<double>::quiet_NaN()}),
               std::runtime_error);
}

TEST(AdamOptimizer, ViewsMatchFlatReference) {
  Rng rng(6);
  DenseLayer fc("fc", 3, 2, Activation::linear);
  fc.init(rng);
  std::vector<ParamView> views;
  fc.collect_params(views);

  std::vector<double> flat_p, flat_g;
  for (const auto& v : views) {
    flat_p.insert(flat_p.end(), v.values, v.values + v.size());
  }
  const auto x = random_vec(rng, 3);
  const auto c = random_vec(rng, 2);
  fc.forward(x);
  fc.zero_grads();
  fc.backward(c);
  for (const auto& v : views) {
    flat_g.insert(flat_g.end(), v.grads, v.grads + v.size());
  }

  AdamOptimizer opt(AdamConfig{});
  opt.initialize(views);
  opt.step(views);

  AdamState ref;
  adam_step(ref, flat_p, flat_g);
  size_t k = 0;
  for (const auto& v : views) {
    for (size_t i = 0; i < v.size(); ++i, ++k) {
      ASSERT_NEAR(v.values[i], flat_p[k], 1e-15);
    }
  }
  EXPECT_EQ(opt.state().step_count, 1);
}

// ---------------------------------------------------------------------------
// EntityConvLayer

TEST(EntityConv, IdentityFilters) {
  EntityConvLayer conv("conv", 3, 3, Activation::linear);
  std::vector<ParamView> views;
  conv.collect_params(views);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) views[0].values[r * 3 + c] = r == c ? 1.0 : 0.0;
  }
  Rng rng(3);
  const Tensor2 in = random_tensor(rng, 1, 3);
  const Tensor2& out = conv.forward(in);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.at(0, c), in.at(0, c));
}

TEST(EntityConv, WeightSharingAcrossRows) {
  Rng rng(4);
  EntityConvLayer conv("conv", 5, 4, Activation::tanh);
  conv.init(rng);
  Tensor2 in = random_tensor(rng, 3, 5);
  for (int c = 0; c < 5; ++c) in.at(2, c) = in.at(0, c);
  const Tensor2& out = conv.forward(in);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(out.at(0, c), out.at(2, c));
}

TEST(EntityConv, MatchesPerRowDenseOracle) {
  Rng rng(41);
  EntityConvLayer conv("conv", 5, 4, Activation::relu);
  conv.init(rng);
  DenseLayer fc("fc", 5, 4, Activation::relu);
  std::vector<ParamView> cv, dv;
  conv.collect_params(cv);
  fc.collect_params(dv);
  for (size_t b = 0; b < cv.size(); ++b) {
    std::copy(cv[b].values, cv[b].values + cv[b].size(), dv[b].values);
  }
  const Tensor2 in = random_tensor(rng, 3, 5);
  const Tensor2& out = conv.forward(in);
  for (int e = 0; e < 3; ++e) {
    const auto row = fc.forward(std::span<const double>(in.row(e), 5));
    for (int c = 0; c < 4; ++c) ASSERT_NEAR(out.at(e, c), row[c], 1e-12);
  }
}

TEST(EntityConv, GradientsMatchFiniteDifferences) {
  Rng rng(200);
  const Activation acts[] = {Activation::relu, Activation::tanh,
                             Activation::sigmoid, Activation::linear};
  for (int trial = 0; trial < 30; ++trial) {
    const int width = rng.uniform_int(1, 6);
    const int filters = rng.uniform_int(1, 6);
    const int rows = rng.uniform_int(1, 5);
    EntityConvLayer conv("conv", width, filters, acts[trial % 4]);
    conv.init(rng);
    const Tensor2 in = random_tensor(rng, rows, width);
    const Tensor2 c = random_tensor(rng, rows, filters);
    auto loss = [&]() {
      const Tensor2& y = conv.forward(in);
      double l = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) l += c.data[i] * y.data[i];
      return l;
    };
    loss();
    conv.zero_grads();
    const Tensor2& dx = conv.backward(c);
    std::vector<ParamView> views;
    conv.collect_params(views);
    const double tol = trial % 4 == 0 ? 1e-4 : 1e-6;
    check_param_grads(views, loss, tol);

    Tensor2 im = in;
    auto loss_x = [&]() {
      const Tensor2& y = conv.forward(im);
      double l = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) l += c.data[i] * y.data[i];
      return l;
    };
    for (size_t i = 0; i < im.data.size(); ++i) {
      const double orig = im.data[i];
      im.data[i] = orig + kFdStep;
      const double lp = loss_x();
      im.data[i] = orig - kFdStep;
      const double lm = loss_x();
      im.data[i] = orig;
      ASSERT_LT(rel_err((lp - lm) / (2.0 * kFdStep), dx.data[i]), tol);
    }
  }
}

// ---------------------------------------------------------------------------
// SEBlock

TEST(SEBlock, ZeroInputStaysZero) {
  SEBlock se("se", 4, 2);
  Tensor2 in(3, 4);
  const Tensor2& out = se.forward(in);
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 0.0);
  // Gates sit at sigmoid(0) = 0.5 when the excitation path sees zeros.
  for (double g : se.gates()) EXPECT_DOUBLE_EQ(g, 0.5);
}

TEST(SEBlock, SaturatedGatesPassInputThrough) {
  SEBlock se("se", 4, 2);
  std::vector<ParamView> views;
  se.collect_params(views);
  for (auto& v : views) {
    if (v.name == "se/excite/biases") {
      for (size_t i = 0; i < v.size(); ++i) v.values[i] = 40.0;
    }
  }
  Rng rng(12);
  const Tensor2 in = random_tensor(rng, 3, 4);
  const Tensor2& out = se.forward(in);
  for (size_t i = 0; i < in.data.size(); ++i) {
    ASSERT_NEAR(out.data[i], in.data[i], 1e-6);
  }
}

TEST(SEBlock, RowPermutationEquivariant) {
  Rng rng(13);
  SEBlock se("se", 6, 3);
  se.init(rng);
  const Tensor2 in = random_tensor(rng, 4, 6);
  Tensor2 perm(4, 6);
  const int order[4] = {2, 0, 3, 1};
  for (int e = 0; e < 4; ++e) {
    std::copy(in.row(order[e]), in.row(order[e]) + 6, perm.row(e));
  }
  Tensor2 out = se.forward(in);
  const Tensor2& out_perm = se.forward(perm);
  for (int e = 0; e < 4; ++e) {
    for (int c = 0; c < 6; ++c) {
      ASSERT_NEAR(out.at(order[e], c), out_perm.at(e, c), 1e-12);
    }
  }
}

TEST(SEBlock, RejectsBadReduction) {
  EXPECT_THROW(SEBlock("se", 6, 4), std::invalid_argument);
  EXPECT_THROW(SEBlock("se", 6, 0), std::invalid_argument);
}

TEST(SEBlock, GradientsMatchFiniteDifferences) {
  Rng rng(300);
  for (int trial = 0; trial < 30; ++trial) {
    const int reduction = rng.uniform_int(1, 2);
    const int channels = reduction * rng.uniform_int(1, 4);
    const int rows = rng.uniform_int(1, 5);
    SEBlock se("se", channels, reduction);
    se.init(rng);
    const Tensor2 in = random_tensor(rng, rows, channels);
    const Tensor2 c = random_tensor(rng, rows, channels);
    auto loss = [&]() {
      const Tensor2& y = se.forward(in);
      double l = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) l += c.data[i] * y.data[i];
      return l;
    };
    loss();
    se.zero_grads();
    const Tensor2& dx = se.backward(c);
    std::vector<ParamView> views;
    se.collect_params(views);
    check_param_grads(views, loss, 1e-4);

    Tensor2 im = in;
    auto loss_x = [&]() {
      const Tensor2& y = se.forward(im);
      double l = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) l += c.data[i] * y.data[i];
      return l;
    };
    for (size_t i = 0; i < im.data.size(); ++i) {
      const double orig = im.data[i];
      im.data[i] = orig + kFdStep;
      const double lp = loss_x();
      im.data[i] = orig - kFdStep;
      const double lm = loss_x();
      im.data[i] = orig;
      ASSERT_LT(rel_err((lp - lm) / (2.0 * kFdStep), dx.data[i]), 1e-4);
    }
  }
}

// ---------------------------------------------------------------------------
// EntityMaxPool

TEST(MaxPool, SingleRowIsIdentity) {
  EntityMaxPool pool;
  Tensor2 in(1, 3);
  in.at(0, 0) = -1.0;
  in.at(0, 1) = 0.5;
  in.at(0, 2) = 2.0;
  const auto out = pool.forward(in);
  EXPECT_DOUBLE_EQ(out[0], -1.0);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  EXPECT_DOUBLE_EQ(out[2], 2.0);
}

TEST(MaxPool, ElementwiseMax) {
  EntityMaxPool pool;
  Tensor2 in(2, 2);
  in.at(0, 0) = 1.0;
  in.at(0, 1) = 5.0;
  in.at(1, 0) = 3.0;
  in.at(1, 1) = 2.0;
  const auto out = pool.forward(in);
  EXPECT_DOUBLE_EQ(out[0], 3.0);
  EXPECT_DOUBLE_EQ(out[1], 5.0);
}

TEST(MaxPool, PermutationInvariant) {
  Rng rng(14);
  EntityMaxPool pool;
  const Tensor2 in = random_tensor(rng, 5, 4);
  Tensor2 perm(5, 4);
  const int order[5] = {4, 2, 0, 1, 3};
  for (int e = 0; e < 5; ++e) {
    std::copy(in.row(order[e]), in.row(order[e]) + 4, perm.row(e));
  }
  const auto a = pool.forward(in);
  std::vector<double> av(a.begin(), a.end());
  const auto b = pool.forward(perm);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(av[c], b[c]);
}

TEST(MaxPool, EmptyInputRejected) {
  EntityMaxPool pool;
  Tensor2 in(0, 4);
  EXPECT_THROW(pool.forward(in), std::invalid_argument);
}

TEST(MaxPool, GradientRoutesToFirstMaximum) {
  EntityMaxPool pool;
  Tensor2 in(3, 2);
  in.at(0, 0) = 1.0;
  in.at(1, 0) = 1.0;  // tie: gradient goes to row 0
  in.at(2, 0) = 0.0;
  in.at(0, 1) = 0.0;
  in.at(1, 1) = 2.0;
  in.at(2, 1) = 1.0;
  pool.forward(in);
  const Tensor2& dx = pool.backward(std::vector<double>{1.0, 1.0});
  EXPECT_DOUBLE_EQ(dx.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(dx.at(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(dx.at(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(dx.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(dx.at(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(dx.at(2, 1), 0.0);
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
  Rng rng(400);
  for (int trial = 0; trial < 30; ++trial) {
    const int rows = rng.uniform_int(1, 6);
    const int cols = rng.uniform_int(1, 6);
    EntityMaxPool pool;
    Tensor2 in = random_tensor(rng, rows, cols);
    const auto c = random_vec(rng, cols);
    auto loss = [&]() {
      const auto y = pool.forward(in);
      double l = 0.0;
      for (int i = 0; i < cols; ++i) l += c[i] * y[i];
      return l;
    };
    loss();
    const Tensor2& dx = pool.backward(c);
    Tensor2 dx_copy = dx;
    for (size_t i = 0; i < in.data.size(); ++i) {
      const double orig = in.data[i];
      in.data[i] = orig + kFdStep;
      const double lp = loss();
      in.data[i] = orig - kFdStep;
      const double lm = loss();
      in.data[i] = orig;
      ASSERT_LT(rel_err((lp - lm) / (2.0 * kFdStep), dx_copy.data[i]), 1e-4);
    }
  }
}

TEST(MaxPoolFreeFunction, MatchesClassForward) {
  Rng rng(15);
  const Tensor2 in = random_tensor(rng, 4, 3);
  EntityMaxPool pool;
  const auto a = pool.forward(in);
  const auto b = max_pool_entities(in);
  ASSERT_EQ(b.size(), 3u);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(a[c], b[c]);
}

}  // namespace
}  // namespace flocksim::nn
