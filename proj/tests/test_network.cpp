#include <gtest/gtest.h>

#include <cmath>

#include "ucag/network.hpp"
#include "ucag/random.hpp"

using namespace ucag;

namespace {

Tensor random_image(std::vector<Index> shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(0, 1);
  return t;
}

// conv whose 3x3 kernels only use the centre tap: a 1x1 convolution.
Conv2D pointwise_conv(const RowMatrix<double>& mix) {
  Conv2D conv{Tensor({mix.rows(), mix.cols(), 3, 3}), Tensor({mix.rows()})};
  for (Index o = 0; o < mix.rows(); ++o)
    for (Index i = 0; i < mix.cols(); ++i) conv.weight(o, i, 1, 1) = mix(o, i);
  return conv;
}

Network linear_probe(const RowMatrix<double>& head_weights) {
  const Index features = head_weights.cols();
  Dense dense{Tensor::from_matrix(head_weights), Tensor({head_weights.rows()})};
  return Network({pointwise_conv(RowMatrix<double>::Identity(features, features)), GlobalAvgPool{}, std::move(dense)},
                 {features, 1, 1});
}

// Sign pattern of every ReLU input and winner of every pool window: the
// linear region the network is in.
std::vector<int> activation_pattern(const Network& net, const ForwardTrace& t) {
  std::vector<int> pattern;
  for (Index i = 0; i < net.layer_count(); ++i) {
    const Tensor& in = t.activations[static_cast<std::size_t>(i)];
    if (std::holds_alternative<ReLU>(net.layer(i))) {
      for (Index j = 0; j < in.size(); ++j) pattern.push_back(in[j] > 0 ? 1 : 0);
    } else if (std::holds_alternative<MaxPool2>(net.layer(i))) {
      const Tensor& out = t.activations[static_cast<std::size_t>(i + 1)];
      for (Index j = 0; j < out.size(); ++j) {
        // Encode which window element equals the output.
        const Index plane = j / out.spatial().area(), cell = j % out.spatial().area();
        const Index oy = cell / out.dim(-1), ox = cell % out.dim(-1);
        int which = -1;
        for (int d = 3; d >= 0; --d)
          if (in(plane / in.dim(1), plane % in.dim(1), 2 * oy + d / 2, 2 * ox + d % 2) == out[j]) which = d;
        pattern.push_back(which);
      }
    }
  }
  return pattern;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  Network net = make_toy_network(3, 4, {16, 16}, 1);
  for (Index i = 0; i < net.layer_count(); ++i) {
    if (auto* c = std::get_if<Conv2D>(&net.layer(i))) c->weight.values().setZero();
    if (auto* d = std::get_if<Dense>(&net.layer(i))) d->weight.values().setZero();
  }
  const ForwardTrace t = forward(net, random_image({2, 3, 16, 16}, 9));
  EXPECT_EQ(t.logits, Tensor({2, 4}));
}

TEST(Forward, PointwiseConvClosedForm) {
  RowMatrix<double> mix(1, 1);
  mix << 2.5;
  Dense identity{Tensor({1, 1}, {1.0}), Tensor({1})};
  Network net({pointwise_conv(mix), GlobalAvgPool{}, identity}, {1, 5, 5});
  const ForwardTrace t = forward(net, Tensor({1, 5, 5}, 0.4));
  EXPECT_NEAR(t.logits(0, 0), 2.5 * 0.4, 1e-15);
}

TEST(Forward, ShapePolymorphicAndBatched) {
  const Network net = make_toy_network(3, 2, {64, 64}, 5, {2, 2, 2});
  const Tensor batch = random_image({36, 3, 323, 323}, 4);
  const Tensor logits = predict_logits(net, batch);
  EXPECT_EQ(logits.shape(), (std::vector<Index>{36, 2}));
  EXPECT_TRUE(logits.all_finite());
  EXPECT_EQ(predict_logits(net, random_image({1, 3, 322, 322}, 4)).shape(), (std::vector<Index>{1, 2}));
  EXPECT_EQ(predict_logits(net, random_image({3, 17, 9}, 4)).shape(), (std::vector<Index>{1, 2}));
}

TEST(Forward, RejectsChannelMismatchAndTinyInputs) {
  const Network net = make_toy_network(3, 2, {16, 16}, 5);
  EXPECT_THROW(forward(net, Tensor({1, 2, 8, 8})), InvalidArgument);
  EXPECT_THROW(forward(net, Tensor({1, 3, 3, 3})), InvalidArgument);
}

TEST(Network, RejectsMalformedChains) {
  Dense head{Tensor({2, 3}), Tensor({2})};
  EXPECT_THROW(Network({GlobalAvgPool{}, head}, {3, 4, 4}), InvalidArgument);
  RowMatrix<double> mix = RowMatrix<double>::Identity(2, 2);
  EXPECT_THROW(Network({pointwise_conv(mix), GlobalAvgPool{}, head}, {2, 4, 4}), InvalidArgument);
  EXPECT_THROW(Network({pointwise_conv(mix), head, GlobalAvgPool{}}, {2, 4, 4}), InvalidArgument);
}

TEST(Gradient, UniformUnderGlobalPooling) {
  const Network net = make_toy_network(3, 3, {32, 32}, 8);
  const ForwardTrace t = forward(net, random_image({3, 32, 32}, 2));
  const Index layer = net.last_spatial_layer();
  const Tensor g = grad_wrt_activation(net, t, 1, layer);
  const auto& head = std::get<Dense>(net.layers().back());
  const Shape2D s = g.spatial();
  for (Index c = 0; c < g.dim(1); ++c)
    for (Index p = 0; p < s.area(); ++p)
      EXPECT_NEAR(g.values()[c * s.area() + p], head.weight(1, c) / static_cast<double>(s.area()), 1e-15);
}

TEST(Gradient, ReluBlocksNegativePreactivations) {
  const Network net = make_toy_network(3, 2, {16, 16}, 3);
  const ForwardTrace t = forward(net, random_image({3, 16, 16}, 6));
  const Index conv = net.last_spatial_layer() - 1;  // conv feeding the last ReLU
  const Tensor g = grad_wrt_activation(net, t, 0, conv);
  const Tensor& pre = t.output(conv);
  Index blocked = 0;
  for (Index i = 0; i < pre.size(); ++i)
    if (pre[i] < 0) {
      EXPECT_EQ(g[i], 0.0);
      ++blocked;
    }
  EXPECT_GT(blocked, 0);
}

TEST(Gradient, RejectsUnknownLayer) {
  const Network net = make_toy_network(3, 2, {16, 16}, 3);
  const ForwardTrace t = forward(net, random_image({3, 16, 16}, 6));
  EXPECT_THROW(grad_wrt_activation(net, t, 0, 99), InvalidArgument);
  EXPECT_THROW(grad_wrt_activation(net, t, 0, net.layer_count() - 1), InvalidArgument);
  EXPECT_THROW(grad_wrt_activation(net, t, 5, 0), InvalidArgument);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  constexpr double kStep = 1e-4;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Network net = make_toy_network(3, 3, {16, 16}, seed);
    const ForwardTrace t = forward(net, random_image({3, 16, 16}, 100 + seed));
    Rng rng(seed * 7);
    for (Index layer : {kInputLayer, Index{0}, Index{3}, net.last_spatial_layer()}) {
      const Tensor g = grad_wrt_activation(net, t, 2, layer);
      const Tensor& act = layer == kInputLayer ? t.input() : t.output(layer);
      int checked = 0;
      while (checked < 5) {
        const auto idx = static_cast<Index>(rng.below(static_cast<std::uint64_t>(act.size())));
        Tensor plus = act, minus = act;
        plus[idx] += kStep;
        minus[idx] -= kStep;
        const double fd = (forward_from(net, layer, plus)(0, 2) - forward_from(net, layer, minus)(0, 2)) / (2 * kStep);
        if (layer == kInputLayer) {
          const auto base = activation_pattern(net, t);
          if (activation_pattern(net, forward(net, plus)) != base || activation_pattern(net, forward(net, minus)) != base)
            continue;  // perturbation crosses a ReLU/pool kink
        }
        EXPECT_LE(std::abs(g[idx] - fd), 1e-4 * std::max({std::abs(g[idx]), std::abs(fd), 1e-8}))
            << "layer " << layer << " idx " << idx;
        ++checked;
      }
    }
  }
}

TEST(Lrp, OneHotInputTakesAllRelevance) {
  RowMatrix<double> w(1, 2);
  w << 2.0, 1.0;
  const Network net = linear_probe(w);
  const ForwardTrace t = forward(net, Tensor({2, 1, 1}, {1, 0}));
  const Tensor r = lrp_propagate(net, t, 0, 1e-12);
  EXPECT_NEAR(r[0], 2.0, 1e-9);
  EXPECT_EQ(r[1], 0.0);
}

TEST(Lrp, ProportionalSplit) {
  RowMatrix<double> w(1, 2);
  w << 2.0, 1.0;
  const Network net = linear_probe(w);
  const ForwardTrace t = forward(net, Tensor({2, 1, 1}, {1, 1}));
  const Tensor r = lrp_propagate(net, t, 0, 1e-12);
  EXPECT_NEAR(r[0] / r.sum(), 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(r[1] / r.sum(), 1.0 / 3.0, 1e-9);
}

TEST(Lrp, RejectsNonPositiveEpsilon) {
  const Network net = make_toy_network(3, 2, {8, 8}, 3);
  const ForwardTrace t = forward(net, random_image({3, 8, 8}, 1));
  EXPECT_THROW(lrp_propagate(net, t, 0, 0.0), InvalidArgument);
}

TEST(Lrp, ConservesRelevanceThroughToyNetwork) {
  const Network net = make_toy_network(3, 2, {32, 32}, 12);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ForwardTrace t = forward(net, random_image({3, 32, 32}, 50 + s));
    const double logit = t.logits(0, 1);
    const auto rel = lrp_relevances(net, t, 1, 1e-9);
    EXPECT_NEAR(rel.front().sum(), logit, 0.01 * std::abs(logit));
    for (std::size_t l = 1; l < rel.size(); ++l)
      EXPECT_LE(std::abs(rel[l].sum() - rel[l - 1].sum()), 1e-6 * std::abs(logit) + 10 * 1e-9) << "boundary " << l;
  }
}
