#pragma once

// Unfold, explain each patch, weight by confidence, rescale and fold.

#include <vector>

#include "ucag/explainers.hpp"
#include "ucag/unfolder.hpp"

namespace ucag {

struct UcagParams {
  double rho = 0.555;
  Index n = 6;
  double alpha = 2.6;
  ExplainerSpec explainer;
};

/// y_j = exp(softmax(logits_j)[k]) for each row j of a [n^2, K] tensor; every
/// entry lies in (1, e].
Tensor confidence_weights(const Tensor& logits, Index class_k);

/// resize_bilinear(E_j * y_j, (H', W')) for each partial map.
std::vector<Tensor> aggregate_partials(const std::vector<SaliencyMap>& partials, const Tensor& y,
                                       const PatchGrid& grid);

struct UcagResult {
  SaliencyMap map;  // image resolution, signed, unnormalised
  PatchGrid grid;
  Tensor logits;   // [n^2, K] per-patch logits
  Tensor weights;  // [n^2] confidence weights
};

/// Full pipeline. Per-patch work runs on up to `workers` threads; the result
/// does not depend on the worker count.
UcagResult ucag_explain(const Network& net, const UcagParams& params, const Tensor& image, Index class_k,
                        Index workers = 1);

}  // namespace ucag
