#pragma once

// Explanation backends: the gradient-CAM family and epsilon-rule LRP.

#include <optional>
#include <string>
#include <vector>

#include "ucag/network.hpp"
#include "ucag/saliency.hpp"
#include "ucag/unfolder.hpp"

namespace ucag {

enum class ExplainMethod { gradcam, gradcam_pp, xgradcam, wgradcam, lrp_eps };

/// Canonical CLI spelling: gradcam, gradcam-pp, xgradcam, wgradcam, lrp-eps.
std::string to_string(ExplainMethod m);
ExplainMethod parse_method(const std::string& name);

inline bool is_cam(ExplainMethod m) { return m != ExplainMethod::lrp_eps; }

struct ExplainerSpec {
  ExplainMethod method = ExplainMethod::gradcam;
  std::optional<Index> layer;     // CAM only; defaults to the last conv block output
  std::optional<double> epsilon;  // LRP only; defaults to kDefaultLrpEpsilon

  static constexpr double kDefaultLrpEpsilon = 1e-9;

  static ExplainerSpec cam(ExplainMethod m, std::optional<Index> layer = std::nullopt) { return {m, layer, {}}; }
  static ExplainerSpec lrp(double eps = kDefaultLrpEpsilon) { return {ExplainMethod::lrp_eps, {}, eps}; }
};

/// Throws InvalidArgument when a field is set for a method that does not use it.
void validate(const ExplainerSpec& spec);

/// Per-channel CAM weights from activations A and logit gradients g, both
/// [C, h, w] at the chosen layer.
///   gradcam   : mean of g
///   gradcam-pp: sum of alpha * relu(g), alpha = g^2 / (2 g^2 + sum(A) g^3)
///   xgradcam  : sum of A / (sum(A) + 1e-7) * g
/// wgradcam has no published closed form we can source; it is recognised but
/// reported as unavailable.
Eigen::VectorXd cam_coefficients(ExplainMethod method, const Tensor& activation, const Tensor& grad);

/// CAM: ReLU(sum_c w_c A_c) bilinearly resized to the image; LRP: input
/// relevance summed over channels, signed. No normalisation either way.
SaliencyMap explain(const ExplainerSpec& spec, const Network& net, const Tensor& image, Index class_k);

/// explain() plus the logits row of the same forward pass.
struct Explanation {
  SaliencyMap map;
  Eigen::VectorXd logits;
};
Explanation explain_with_logits(const ExplainerSpec& spec, const Network& net, const Tensor& image, Index class_k);

struct PatchExplanations {
  std::vector<SaliencyMap> maps;  // one per patch, at the scaled patch size
  Tensor logits;                  // [n^2, K]
};

/// Explains every patch independently on up to `workers` threads; results are
/// assembled in patch order. Errors carry the failing patch index.
PatchExplanations explain_patches(const ExplainerSpec& spec, const Network& net, const PatchSet& patches,
                                  Index class_k, Index workers = 1);

}  // namespace ucag
