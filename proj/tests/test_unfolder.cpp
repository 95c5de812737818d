#include <gtest/gtest.h>

#include "ucag/random.hpp"
#include "ucag/unfolder.hpp"

using namespace ucag;

namespace {

Tensor ramp(Index c, Index h, Index w) {
  Tensor t({c, h, w});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return t;
}

// Brute-force count of planned patches containing each pixel.
Tensor membership_counts(const PatchGrid& g) {
  Tensor counts({g.image.h, g.image.w});
  for (Index y = 0; y < g.image.h; ++y)
    for (Index x = 0; x < g.image.w; ++x)
      for (const PatchOffset& o : g.offsets)
        if (y >= o.row && y < o.row + g.patch.h && x >= o.col && x < o.col + g.patch.w) counts(y, x) += 1;
  return counts;
}

}  // namespace

TEST(PlanGrid, ExactTiling) {
  const PatchGrid g = plan_grid({4, 4}, 0.5, 2);
  EXPECT_EQ(g.patch, (Shape2D{2, 2}));
  EXPECT_EQ(g.row_offsets, (std::vector<Index>{0, 2}));
  EXPECT_EQ(g.col_offsets, (std::vector<Index>{0, 2}));
  EXPECT_EQ(g.offsets.size(), 4u);
  EXPECT_EQ(g.offsets[1], (PatchOffset{0, 2}));
}

TEST(PlanGrid, DefaultHyperparameters) {
  const PatchGrid g = plan_grid({224, 224}, 0.555, 6, 2.6);
  EXPECT_EQ(g.patch, (Shape2D{124, 124}));
  EXPECT_EQ(g.row_offsets, (std::vector<Index>{0, 20, 40, 60, 80, 100}));
  EXPECT_EQ(g.col_offsets, g.row_offsets);
  EXPECT_EQ(g.count(), 36);
  // ceil(2.6 * 124) = ceil(322.4)
  EXPECT_EQ(g.scaled, (Shape2D{323, 323}));
  EXPECT_EQ(g.beta_target(), g.patch);
}

TEST(PlanGrid, OverlappingOffsets) {
  const PatchGrid g = plan_grid({4, 4}, 0.75, 2);
  EXPECT_EQ(g.patch, (Shape2D{3, 3}));
  EXPECT_EQ(g.row_offsets, (std::vector<Index>{0, 1}));
}

TEST(PlanGrid, RejectsBadParameters) {
  EXPECT_THROW(plan_grid({4, 4}, 0.0, 2), InvalidArgument);
  EXPECT_THROW(plan_grid({4, 4}, 1.5, 2), InvalidArgument);
  EXPECT_THROW(plan_grid({4, 4}, 0.5, 0), InvalidArgument);
  EXPECT_THROW(plan_grid({4, 4}, 0.1, 2), InvalidArgument);
  EXPECT_THROW(plan_grid({4, 4}, 0.5, 2, 0.5), InvalidArgument);
  // Two 2-pixel patches cannot cover 10 pixels.
  EXPECT_THROW(plan_grid({10, 10}, 0.2, 2), InvalidArgument);
  EXPECT_THROW(plan_grid({10, 10}, 0.5, 1), InvalidArgument);
}

TEST(PlanGrid, RepresentationSlack) {
  // 0.29 * 100 evaluates just below 29 in binary floating point.
  EXPECT_EQ(plan_grid({100, 100}, 0.29, 4).patch.h, 29);
  EXPECT_EQ(plan_grid({10, 10}, 0.5, 2, 2.2).scaled.h, 11);
}

TEST(Unfold, TilingGivesExactCrops) {
  const Tensor img = ramp(1, 4, 4);
  const PatchSet set = unfold(img, plan_grid({4, 4}, 0.5, 2));
  ASSERT_EQ(set.patches.size(), 4u);
  EXPECT_EQ(set.patches[0], Tensor({1, 2, 2}, {0, 1, 4, 5}));
  EXPECT_EQ(set.patches[1], Tensor({1, 2, 2}, {2, 3, 6, 7}));
  EXPECT_EQ(set.patches[2], Tensor({1, 2, 2}, {8, 9, 12, 13}));
  EXPECT_EQ(set.patches[3], Tensor({1, 2, 2}, {10, 11, 14, 15}));
}

TEST(Unfold, ConstantImageGivesConstantPatches) {
  const Tensor img({3, 10, 10}, 0.7);
  const PatchSet set = unfold(img, plan_grid({10, 10}, 0.6, 3, 1.7));
  for (const Tensor& p : set.patches) EXPECT_LT((p.values().array() - 0.7).abs().maxCoeff(), 1e-15);
}

TEST(Unfold, UpscaledCropsMatchComposedOracle) {
  const Tensor img = ramp(1, 4, 4);
  const PatchGrid g = plan_grid({4, 4}, 0.75, 2, 2.0);
  const PatchSet set = unfold(img, g);
  ASSERT_EQ(g.scaled, (Shape2D{6, 6}));
  for (std::size_t j = 0; j < 4; ++j) {
    const PatchOffset o = g.offsets[j];
    ASSERT_EQ(set.patches[j].shape(), (std::vector<Index>{1, 6, 6}));
    for (Index y = 0; y < 6; ++y)
      for (Index x = 0; x < 6; ++x) {
        // Crop oracle + half-pixel interpolation oracle (3 -> 6 samples).
        auto src = [](Index d) { return std::clamp((d + 0.5) * 0.5 - 0.5, 0.0, 2.0); };
        const double sy = src(y), sx = src(x);
        const auto y0 = static_cast<Index>(sy), x0 = static_cast<Index>(sx);
        const Index y1 = std::min<Index>(y0 + 1, 2), x1 = std::min<Index>(x0 + 1, 2);
        const double ty = sy - y0, tx = sx - x0;
        auto at = [&](Index yy, Index xx) { return img(0, o.row + yy, o.col + xx); };
        const double expected = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                                ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
        EXPECT_NEAR(set.patches[j](0, y, x), expected, 1e-12);
      }
  }
}

TEST(Unfold, RejectsShapeMismatch) {
  EXPECT_THROW(unfold(Tensor({1, 5, 4}), plan_grid({4, 4}, 0.5, 2)), InvalidArgument);
}

TEST(DuplicationMatrix, TilingIsAllOnes) {
  const DuplicationMatrix d = duplication_matrix(plan_grid({4, 4}, 0.5, 2));
  EXPECT_EQ(d.counts, Tensor({4, 4}, 1.0));
}

TEST(DuplicationMatrix, OverlapMatchesMembershipOracle) {
  EXPECT_EQ(axis_coverage(4, 3, {0, 1}), Eigen::Vector4d(1, 2, 2, 1));
  const PatchGrid g = plan_grid({4, 4}, 0.75, 2);
  EXPECT_EQ(duplication_matrix(g).counts, membership_counts(g));
  EXPECT_EQ(g.duplication->counts(1, 2), 4.0);
}

TEST(DuplicationMatrix, DefaultGridBounds) {
  const PatchGrid g = plan_grid({224, 224}, 0.555, 6, 2.6);
  const Tensor& counts = g.duplication->counts;
  EXPECT_EQ(counts, membership_counts(g));
  EXPECT_EQ(counts.min(), 1.0);
  EXPECT_EQ(counts(0, 0), 1.0);
  EXPECT_EQ(counts(223, 223), 1.0);
  EXPECT_EQ(counts.max(), 36.0);
  EXPECT_EQ(counts.sum(), 36.0 * 124 * 124);
}

TEST(FoldAverage, AllOnesCancel) {
  const PatchGrid g = plan_grid({9, 7}, 0.6, 3);
  std::vector<Tensor> maps(9, Tensor({g.patch.h, g.patch.w}, 1.0));
  const Tensor out = fold_average(maps, g);
  EXPECT_LT((out.values().array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(FoldAverage, HandScatterAddOracle) {
  const PatchGrid g = plan_grid({4, 4}, 0.75, 2);
  // Maps anchored at column 0 hold 1, maps anchored at column 1 hold 3.
  std::vector<Tensor> maps;
  for (const PatchOffset& o : g.offsets) maps.emplace_back(std::vector<Index>{3, 3}, o.col == 0 ? 1.0 : 3.0);
  const Tensor out = fold_average(maps, g);
  for (Index y = 0; y < 4; ++y) {
    EXPECT_DOUBLE_EQ(out(y, 0), 1.0);
    EXPECT_DOUBLE_EQ(out(y, 1), 2.0);
    EXPECT_DOUBLE_EQ(out(y, 2), 2.0);
    EXPECT_DOUBLE_EQ(out(y, 3), 3.0);
  }
}

TEST(FoldAverage, RejectsWrongCountOrShape) {
  const PatchGrid g = plan_grid({4, 4}, 0.5, 2);
  EXPECT_THROW(fold_average(std::vector<Tensor>(3, Tensor({2, 2})), g), InvalidArgument);
  EXPECT_THROW(fold_average(std::vector<Tensor>(4, Tensor({3, 2})), g), InvalidArgument);
}

TEST(FoldAverage, RoundTripLinearityAndOrderProperties) {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const Shape2D image{4 + static_cast<Index>(rng.below(30)), 4 + static_cast<Index>(rng.below(30))};
    const Index n = 1 + static_cast<Index>(rng.below(5));
    // Smallest rho whose n patches still span both axes.
    const double min_rho = std::min(1.0, 1.0 / static_cast<double>(n) + 2.0 / static_cast<double>(std::min(image.h, image.w)));
    const double rho = rng.uniform(min_rho, 1.0);
    const PatchGrid g = plan_grid(image, rho, n);
    Tensor img({2, image.h, image.w});
    for (Index i = 0; i < img.size(); ++i) img[i] = rng.uniform(-1, 1);

    const std::vector<Tensor> crops = crop_patches(img, g);
    const Tensor back = fold_average(crops, g);
    EXPECT_LT((back.values() - img.values()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(g.duplication->counts.min(), 1.0);
    EXPECT_EQ(g.duplication->counts.sum(), static_cast<double>(n * n * g.patch.area()));

    std::vector<Tensor> a, b, mix;
    const double ca = rng.uniform(-2, 2), cb = rng.uniform(-2, 2);
    for (Index j = 0; j < g.count(); ++j) {
      Tensor ma({g.patch.h, g.patch.w}), mb({g.patch.h, g.patch.w});
      for (Index i = 0; i < ma.size(); ++i) {
        ma[i] = rng.uniform(-1, 1);
        mb[i] = rng.uniform(-1, 1);
      }
      mix.push_back(ca * ma + cb * mb);
      a.push_back(std::move(ma));
      b.push_back(std::move(mb));
    }
    const Tensor lhs = fold_average(mix, g);
    const Tensor rhs = ca * fold_average(a, g) + cb * fold_average(b, g);
    EXPECT_LT((lhs.values() - rhs.values()).cwiseAbs().maxCoeff(), 1e-9);

    // Permute (map, offset) pairs consistently.
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(perm);
    PatchGrid shuffled = g;
    std::vector<Tensor> shuffled_maps;
    for (std::size_t j = 0; j < perm.size(); ++j) {
      shuffled.offsets[j] = g.offsets[perm[j]];
      shuffled_maps.push_back(a[perm[j]]);
    }
    EXPECT_LT((fold_average(shuffled_maps, shuffled).values() - fold_average(a, g).values()).cwiseAbs().maxCoeff(),
              1e-12);
  }
}
