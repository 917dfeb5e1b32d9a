#include <gtest/gtest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "fexgan/layers.hpp"

using namespace fexgan;
using fexgan::testing::central_difference;
using fexgan::testing::max_relative_error;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double sd = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = rng.normal(0, sd);
  return t;
}

/// Fixed random projection turning a tensor into a scalar loss.
struct Probe {
  Tensor<double> weights;
  double operator()(const Tensor<double>& y) const {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
    return s;
  }
};

std::vector<double> as_vector(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tensor, ShapeAndVolume) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(shape_string(t.shape()), "[2x3x4]");
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({6, 4}).dim(0), 6u);
}

TEST(Tensor, StackUnstackRoundTrip) {
  Rng rng(1);
  std::vector<Tensor<float>> items;
  for (int i = 0; i < 3; ++i) {
    Tensor<float> t({2, 2});
    for (auto& v : t.values()) v = static_cast<float>(rng.normal());
    items.push_back(t);
  }
  const auto batch = stack<float>(items);
  EXPECT_EQ(batch.shape(), (Shape{3, 2, 2}));
  const auto back = unstack(batch);
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(back[i] == items[i]);
}

TEST(ConvGeometry, HalvesAndDoubles) {
  ConvGeometry g;
  for (std::size_t s : {2u, 4u, 16u, 64u}) {
    EXPECT_EQ(g.output_extent(s), s / 2);
    EXPECT_EQ(g.transposed_extent(s), 2 * s);
  }
}

TEST(Im2Col, Col2ImIsAdjoint) {
  // <im2col(x), c> == <x, col2im(c)> for random x and c.
  Rng rng(2);
  const std::size_t n = 2, h = 6, w = 6, c = 3;
  ConvGeometry g;
  const std::size_t oh = g.output_extent(h), ow = g.output_extent(w);
  auto x = random_tensor({n, h, w, c}, rng);
  auto cols_probe = random_tensor({n * oh * ow, g.kernel * g.kernel * c}, rng);
  Tensor<double> cols(cols_probe.shape());
  im2col(x.data(), n, h, w, c, g, oh, ow, cols.data());
  Tensor<double> back(x.shape());
  col2im(cols_probe.data(), n, h, w, c, g, oh, ow, back.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * cols_probe[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(Conv2d, MatchesDirectConvolution) {
  Rng rng(3);
  Conv2d<double> conv("c", 2, 3, true);
  conv.init(rng, 0.5);
  std::vector<Param<double>*> ps;
  conv.parameters(ps);
  for (auto& v : ps[1]->value.values()) v = rng.normal();
  const auto x = random_tensor({1, 4, 4, 2}, rng);
  Conv2d<double>::Cache cache;
  const auto y = conv.forward(x, cache);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 3}));
  const auto& wt = ps[0]->value;
  for (std::size_t oy = 0; oy < 2; ++oy)
    for (std::size_t ox = 0; ox < 2; ++ox)
      for (std::size_t co = 0; co < 3; ++co) {
        double acc = ps[1]->value[co];
        for (std::size_t ky = 0; ky < 4; ++ky)
          for (std::size_t kx = 0; kx < 4; ++kx) {
            const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
            if (iy < 0 || ix < 0 || iy >= 4 || ix >= 4) continue;
            for (std::size_t ci = 0; ci < 2; ++ci)
              acc += x[(static_cast<std::size_t>(iy) * 4 + static_cast<std::size_t>(ix)) * 2 + ci] *
                     wt[((ky * 4 + kx) * 2 + ci) * 3 + co];
          }
        EXPECT_NEAR(y[(oy * 2 + ox) * 3 + co], acc, 1e-12);
      }
}

template <typename Layer>
void check_layer_gradients(Layer& layer, Tensor<double> x, Rng& rng) {
  using Cache = typename Layer::Cache;
  Cache cache;
  const auto y0 = layer.forward(x, cache);
  const Probe probe{random_tensor(y0.shape(), rng)};
  std::vector<Param<double>*> params;
  layer.parameters(params);
  for (auto* p : params) p->zero_grad();
  const auto dx = layer.backward(probe.weights, cache, {});

  auto loss = [&] {
    Cache c;
    return probe(layer.forward(x, c));
  };
  auto num_dx = central_difference(loss, x.values());
  EXPECT_LT(max_relative_error(as_vector(dx), num_dx, 1e-6), 1e-6);
  for (auto* p : params) {
    const auto analytic = as_vector(p->grad);
    const auto numeric = central_difference(loss, p->value.values());
    EXPECT_LT(max_relative_error(analytic, numeric, 1e-6), 1e-6) << p->name;
  }
}

TEST(LayerGradients, Conv2d) {
  Rng rng(4);
  Conv2d<double> conv("c", 3, 4, true);
  conv.init(rng, 0.3);
  check_layer_gradients(conv, random_tensor({2, 6, 6, 3}, rng), rng);
}

TEST(LayerGradients, ConvTranspose2d) {
  Rng rng(5);
  ConvTranspose2d<double> deconv("d", 3, 2, true);
  deconv.init(rng, 0.3);
  Tensor<double> x = random_tensor({2, 3, 3, 3}, rng);
  ConvTranspose2d<double>::Cache cache;
  EXPECT_EQ(deconv.forward(x, cache).shape(), (Shape{2, 6, 6, 2}));
  check_layer_gradients(deconv, x, rng);
}

TEST(LayerGradients, Dense) {
  Rng rng(6);
  Dense<double> dense("f", 5, 3);
  dense.init(rng, 0.5);
  check_layer_gradients(dense, random_tensor({4, 5}, rng), rng);
}

TEST(LayerGradients, BatchNormTrainMode) {
  Rng rng(7);
  BatchNorm<double> bn("bn", 3);
  std::vector<Param<double>*> params;
  bn.parameters(params);
  for (auto* p : params)
    for (auto& v : p->value.values()) v = rng.normal(0.5, 0.5);
  auto x = random_tensor({4, 2, 2, 3}, rng, 2.0);
  BatchNorm<double>::Cache cache;
  const auto y0 = bn.forward(x, Mode::train, cache, false);
  const Probe probe{random_tensor(y0.shape(), rng)};
  for (auto* p : params) p->zero_grad();
  const auto dx = bn.backward(probe.weights, cache, {});
  auto loss = [&] {
    BatchNorm<double>::Cache c;
    return probe(bn.forward(x, Mode::train, c, false));
  };
  EXPECT_LT(max_relative_error(as_vector(dx), central_difference(loss, x.values()), 1e-6), 1e-5);
  for (auto* p : params)
    EXPECT_LT(max_relative_error(as_vector(p->grad), central_difference(loss, p->value.values()), 1e-6),
              1e-6)
        << p->name;
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  Rng rng(8);
  BatchNorm<double> bn("bn", 2);
  auto x = random_tensor({8, 3, 3, 2}, rng, 3.0);
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] += 5.0;
  BatchNorm<double>::Cache cache;
  const auto y = bn.forward(x, Mode::train, cache);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    const std::size_t m = y.size() / 2;
    for (std::size_t i = c; i < y.size(); i += 2) {
      s += y[i];
      s2 += y[i] * y[i];
    }
    EXPECT_NEAR(s / m, 0.0, 1e-9);
    EXPECT_NEAR(s2 / m, 1.0, 1e-3);
  }
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  BatchNorm<double> bn("bn", 1);
  Tensor<double> x({4, 1}, 0.0);
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  x[3] = 4;  // mean 2.5, unbiased variance 5/3
  BatchNorm<double>::Cache cache;
  bn.forward(x, Mode::train, cache);
  std::vector<StateEntry<double>> st;
  bn.state(st);
  const Tensor<double>* mean = nullptr;
  const Tensor<double>* var = nullptr;
  for (auto& e : st) {
    if (e.name == "bn.running_mean") mean = e.tensor;
    if (e.name == "bn.running_var") var = e.tensor;
  }
  ASSERT_TRUE(mean && var);
  EXPECT_NEAR((*mean)[0], 0.1 * 2.5, 1e-12);
  EXPECT_NEAR((*var)[0], 0.9 + 0.1 * 5.0 / 3.0, 1e-12);

  bn.forward(x, Mode::train, cache, false);
  EXPECT_NEAR((*mean)[0], 0.25, 1e-12);
}

TEST(Activations, BackwardMatchesDifferences) {
  Rng rng(9);
  auto x = random_tensor({20}, rng);
  const Probe probe{random_tensor({20}, rng)};
  {
    const auto y = tanh_activation(x);
    const auto g = tanh_backward(probe.weights, y);
    auto num = central_difference([&] { return probe(tanh_activation(x)); }, x.values());
    EXPECT_LT(max_relative_error(as_vector(g), num, 1e-6), 1e-6);
  }
  {
    const auto y = leaky_relu(x, 0.2);
    const auto g = leaky_relu_backward(probe.weights, y, 0.2);
    auto num = central_difference([&] { return probe(leaky_relu(x, 0.2)); }, x.values());
    EXPECT_LT(max_relative_error(as_vector(g), num, 1e-6), 1e-6);
  }
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
  Tensor<double> z({2, 3});
  z[0] = 1000;
  z[1] = 1001;
  z[2] = 999;
  z[3] = -5;
  z[4] = 0;
  z[5] = 5;
  const auto p = softmax_rows(z);
  for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(p[r * 3] + p[r * 3 + 1] + p[r * 3 + 2], 1.0, 1e-12);
  EXPECT_GT(p[1], p[0]);
  EXPECT_TRUE(std::isfinite(p[0]));
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(800.0), 1.0, 1e-15);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-15);
}
