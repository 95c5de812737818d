#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ucag/errors.hpp"
#include "ucag/pipeline.hpp"
#include "ucag/random.hpp"

using namespace ucag;

namespace {

Tensor random_image(Index c, Index h, Index w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({c, h, w});
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

UcagParams params(double rho, Index n, double alpha, ExplainerSpec spec = {}) { return {rho, n, alpha, spec}; }

}  // namespace

TEST(ConfidenceWeights, DirectEvaluation) {
  const Tensor y = confidence_weights(Tensor({3, 2}, {0.0, 0.0, 1000.0, 0.0, 0.0, 1000.0}), 0);
  EXPECT_NEAR(y[0], std::exp(0.5), 1e-15);
  EXPECT_NEAR(y[0], 1.648721, 1e-6);
  EXPECT_NEAR(y[1], std::numbers::e, 1e-15);
  // exp(p) rounds to exactly 1 once p < 2^-53; the floor keeps p itself positive.
  EXPECT_EQ(y[2], 1.0);
}

TEST(ConfidenceWeights, SingleClassSaturates) {
  const Tensor y = confidence_weights(Tensor({4, 1}, {-3.0, 0.0, 2.0, 50.0}), 0);
  for (Index j = 0; j < 4; ++j) EXPECT_EQ(y[j], std::exp(1.0));
}

TEST(ConfidenceWeights, MonotoneInOwnLogitAndBounded) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits({1, 3});
    for (Index i = 0; i < 3; ++i) logits[i] = rng.uniform(-5.0, 5.0);
    const double before = confidence_weights(logits, 1)[0];
    logits[1] += rng.uniform(0.0, 2.0);
    const double after = confidence_weights(logits, 1)[0];
    EXPECT_GE(after, before);
    EXPECT_GT(before, 1.0);
    EXPECT_LE(after, std::numbers::e);
  }
}

TEST(ConfidenceWeights, RejectsBadClass) {
  EXPECT_THROW(confidence_weights(Tensor({2, 2}), 2), InvalidArgument);
  EXPECT_THROW(confidence_weights(Tensor({2, 2}), -1), InvalidArgument);
}

TEST(AggregatePartials, EqualWeightsOnlyScale) {
  const PatchGrid g = plan_grid({8, 8}, 0.5, 2, 1.0);
  std::vector<SaliencyMap> parts;
  for (int j = 0; j < 4; ++j) parts.push_back({random_image(1, 4, 4, j).reshaped({4, 4}), 0, {4, 4}, MapKind::cam});
  const auto out = aggregate_partials(parts, Tensor({4}, 1.5), g);
  for (std::size_t j = 0; j < 4; ++j)
    for (Index i = 0; i < 16; ++i) EXPECT_EQ(out[j][i], 1.5 * parts[j].values[i]);
}

TEST(AggregatePartials, OnesWithWeightTwoGiveTwos) {
  const PatchGrid g = plan_grid({10, 10}, 1.0, 1, 2.0);
  const auto out = aggregate_partials({{Tensor({20, 20}, 1.0), 0, {20, 20}, MapKind::cam}}, Tensor({1}, 2.0), g);
  ASSERT_EQ(out[0].shape(), (std::vector<Index>{10, 10}));
  for (Index i = 0; i < out[0].size(); ++i) EXPECT_NEAR(out[0][i], 2.0, 1e-15);
}

TEST(AggregatePartials, DownscaleMatchesResizeAfterWeighting) {
  const PatchGrid g = plan_grid({12, 12}, 0.5, 2, 2.0);
  std::vector<SaliencyMap> parts;
  for (int j = 0; j < 4; ++j)
    parts.push_back({random_image(1, 12, 12, 30 + j).reshaped({12, 12}), 0, {12, 12}, MapKind::cam});
  const Tensor y({4}, {1.1, 1.9, 2.5, 1.3});
  const auto out = aggregate_partials(parts, y, g);
  for (std::size_t j = 0; j < 4; ++j) {
    // Separable half-pixel oracle applied to the weighted map.
    const RowMatrix<double> r = interpolation_matrix(12, 6);
    const RowMatrix<double> expect = r * (parts[j].values.plane(0) * y[static_cast<Index>(j)]) * r.transpose();
    for (Index a = 0; a < 6; ++a)
      for (Index b = 0; b < 6; ++b) EXPECT_NEAR(out[j](a, b), expect(a, b), 1e-14);
  }
}

TEST(AggregatePartials, CountMismatchRejected) {
  const PatchGrid g = plan_grid({8, 8}, 0.5, 2, 1.0);
  EXPECT_THROW(aggregate_partials({}, Tensor({4}, 1.0), g), InvalidArgument);
  std::vector<SaliencyMap> parts(4, SaliencyMap{Tensor({4, 4}), 0, {4, 4}, MapKind::cam});
  EXPECT_THROW(aggregate_partials(parts, Tensor({3}, 1.0), g), InvalidArgument);
}

TEST(UcagExplain, DegenerateParamsReduceToBaseExplainer) {
  const Network net = make_toy_network(3, 2, {24, 24}, 5, {3, 4, 5});
  for (const ExplainerSpec& spec : {ExplainerSpec::cam(ExplainMethod::gradcam), ExplainerSpec::lrp()}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Tensor image = random_image(3, 24, 24, seed);
      const UcagResult r = ucag_explain(net, params(1.0, 1, 1.0, spec), image, 1);
      const SaliencyMap base = explain(spec, net, image, 1);
      const Tensor a = normalize_minmax(r.map.values), b = normalize_minmax(base.values);
      for (Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
      EXPECT_EQ(argmax_index(r.map.values), argmax_index(base.values));
      EXPECT_EQ(r.weights.size(), 1);
      EXPECT_EQ(r.map.kind, base.kind);
    }
  }
}

TEST(UcagExplain, ConstantImageGivesConstantMap) {
  // Centre-tap kernels make every partial map of a constant patch constant;
  // full 3x3 kernels would add zero-padding border effects.
  Network toy = make_toy_network(3, 2, {32, 32}, 2, {3, 4, 5});
  std::vector<Layer> layers = toy.layers();
  for (Layer& l : layers)
    if (auto* c = std::get_if<Conv2D>(&l))
      for (Index i = 0; i < c->weight.size(); ++i)
        if (i % 9 != 4) c->weight[i] = 0.0;
  const Network net(layers, toy.input_shape());
  const UcagResult r = ucag_explain(net, params(0.5, 3, 1.5), Tensor({3, 32, 32}, 0.6), 0);
  const double first = r.map.values[0];
  for (Index i = 0; i < r.map.values.size(); ++i) EXPECT_NEAR(r.map.values[i], first, 1e-9);
}

TEST(UcagExplain, FoldedValuesStayWithinWeightedContributors) {
  const Network net = make_toy_network(3, 2, {30, 30}, 7, {3, 4, 5});
  const Tensor image = random_image(3, 30, 30, 70);
  const UcagParams p = params(0.6, 3, 1.4);
  const UcagResult r = ucag_explain(net, p, image, 1);
  ASSERT_EQ(r.weights.size(), 9);
  for (Index j = 0; j < 9; ++j) {
    EXPECT_GT(r.weights[j], 1.0);
    EXPECT_LE(r.weights[j], std::numbers::e);
  }
  // Rebuild the weighted partials and bound each pixel by its contributors.
  const PatchExplanations parts = explain_patches(p.explainer, net, unfold(image, r.grid), 1);
  const auto weighted = aggregate_partials(parts.maps, r.weights, r.grid);
  for (Index y = 0; y < 30; ++y)
    for (Index x = 0; x < 30; ++x) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t j = 0; j < weighted.size(); ++j) {
        const PatchOffset o = r.grid.offsets[j];
        if (y < o.row || y >= o.row + r.grid.patch.h || x < o.col || x >= o.col + r.grid.patch.w) continue;
        lo = std::min(lo, weighted[j](y - o.row, x - o.col));
        hi = std::max(hi, weighted[j](y - o.row, x - o.col));
      }
      EXPECT_GE(r.map.values(y, x), lo - 1e-12);
      EXPECT_LE(r.map.values(y, x), hi + 1e-12);
    }
}

TEST(UcagExplain, WorkerCountDoesNotChangeTheMap) {
  const Network net = make_toy_network(3, 3, {40, 40}, 9, {3, 4, 5});
  const Tensor image = random_image(3, 40, 40, 90);
  for (const ExplainerSpec& spec : {ExplainerSpec::cam(ExplainMethod::gradcam_pp), ExplainerSpec::lrp(1e-6)}) {
    const UcagResult a = ucag_explain(net, params(0.555, 4, 2.0, spec), image, 2, 1);
    const UcagResult b = ucag_explain(net, params(0.555, 4, 2.0, spec), image, 2, 5);
    EXPECT_EQ(a.map.values, b.map.values);
    EXPECT_EQ(a.weights, b.weights);
  }
}

TEST(UcagExplain, LrpNegativesSurviveFolding) {
  const Network net = make_toy_network(3, 2, {24, 24}, 3, {3, 4, 5});
  const UcagResult r = ucag_explain(net, params(0.6, 2, 1.5, ExplainerSpec::lrp()), random_image(3, 24, 24, 3), 0);
  EXPECT_EQ(r.map.kind, MapKind::attribution);
  EXPECT_LT(r.map.values.min(), 0.0);
  EXPECT_GT(r.map.values.max(), 0.0);
}

TEST(UcagExplain, ErrorsCarryStageTags) {
  const Network net = make_toy_network(3, 2, {16, 16}, 1, {2, 2, 2});
  const Tensor image = random_image(3, 16, 16, 1);
  auto message = [&](const UcagParams& p, Index k) {
    try {
      ucag_explain(net, p, image, k);
    } catch (const InvalidArgument& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message(params(1.5, 2, 1.0), 0).rfind("unfold: ", 0), 0u);
  EXPECT_EQ(message(params(0.6, 2, 1.0), 4).rfind("explain: patch 0: ", 0), 0u);
}
