#include "ucag/pipeline.hpp"

#include <cmath>

#include "ucag/errors.hpp"

namespace ucag {

Tensor confidence_weights(const Tensor& logits, Index class_k) {
  require(logits.rank() == 2 && logits.dim(1) >= 1, "logits must be [n^2, K] with K >= 1");
  require(class_k >= 0 && class_k < logits.dim(1), "class " + std::to_string(class_k) + " outside [0, " +
                                                       std::to_string(logits.dim(1)) + ")");
  require(logits.all_finite(), "logits contain non-finite values");
  const Index rows = logits.dim(0), k = logits.dim(1);
  Tensor y({rows});
  for (Index j = 0; j < rows; ++j) {
    const Eigen::VectorXd p = softmax(Eigen::VectorXd(logits.values().segment(j * k, k)));
    y[j] = std::exp(p[class_k]);
  }
  return y;
}

std::vector<Tensor> aggregate_partials(const std::vector<SaliencyMap>& partials, const Tensor& y,
                                       const PatchGrid& grid) {
  const auto count = static_cast<Index>(partials.size());
  require(count == grid.count() && y.rank() == 1 && y.size() == count,
          "expected " + std::to_string(grid.count()) + " partial maps and weights, got " + std::to_string(count) +
              " and " + std::to_string(y.size()));
  std::vector<Tensor> out;
  out.reserve(partials.size());
  for (Index j = 0; j < count; ++j)
    out.push_back(resize_bilinear(partials[static_cast<std::size_t>(j)].values * y[j], grid.beta_target()));
  return out;
}

UcagResult ucag_explain(const Network& net, const UcagParams& params, const Tensor& image, Index class_k,
                        Index workers) {
  require(image.rank() == 3, "ucag_explain expects a [C,H,W] image");
  require(image.all_finite(), "image contains non-finite values");
  const Shape2D shape = image.spatial();

  PatchGrid grid = with_context("unfold", [&] { return plan_grid(shape, params.rho, params.n, params.alpha); });
  const PatchSet patches = with_context("unfold", [&] { return unfold(image, grid); });
  PatchExplanations parts =
      with_context("explain", [&] { return explain_patches(params.explainer, net, patches, class_k, workers); });
  Tensor y = with_context("confidence", [&] { return confidence_weights(parts.logits, class_k); });
  const std::vector<Tensor> weighted =
      with_context("aggregate", [&] { return aggregate_partials(parts.maps, y, grid); });
  Tensor folded = with_context("fold", [&] { return fold_average(weighted, grid); });

  const MapKind kind = parts.maps.front().kind;
  return {{std::move(folded), class_k, shape, kind}, std::move(grid), std::move(parts.logits), std::move(y)};
}

}  // namespace ucag
