#include "ucag/explainers.hpp"

#include <array>
#include <utility>

#include "ucag/errors.hpp"
#include "ucag/parallel.hpp"

namespace ucag {
namespace {

constexpr std::array<std::pair<ExplainMethod, const char*>, 5> kMethodNames{{
    {ExplainMethod::gradcam, "gradcam"},
    {ExplainMethod::gradcam_pp, "gradcam-pp"},
    {ExplainMethod::xgradcam, "xgradcam"},
    {ExplainMethod::wgradcam, "wgradcam"},
    {ExplainMethod::lrp_eps, "lrp-eps"},
}};

const std::string kWgradcamUnavailable = "wgradcam coefficients are not available in this build";

using PlaneMatrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

PlaneMatrix channel_rows(const Tensor& t) { return PlaneMatrix(t.data(), t.dim(0), t.dim(1) * t.dim(2)); }

Index cam_layer(const ExplainerSpec& spec, const Network& net) {
  const Index layer = spec.layer.value_or(net.last_spatial_layer());
  require(layer >= kInputLayer && layer < net.layer_count(),
          "CAM layer " + std::to_string(layer) + " does not exist");
  return layer;
}

SaliencyMap cam_map(const ExplainerSpec& spec, const Network& net, const ForwardTrace& trace, Index class_k,
                    Shape2D image) {
  const Index layer = cam_layer(spec, net);
  const Tensor& act4 = trace.output(layer);
  require(act4.rank() == 4, "CAM layer " + std::to_string(layer) + " (" +
                                (layer == kInputLayer ? std::string("input") : layer_name(net.layer(layer))) +
                                ") has no spatial extent");
  const Tensor activation = unstack(act4, 0);
  const Tensor grad = unstack(grad_wrt_activation(net, trace, class_k, layer), 0);
  const Eigen::VectorXd w = cam_coefficients(spec.method, activation, grad);

  Tensor feature({activation.dim(1), activation.dim(2)});
  Eigen::Map<Eigen::RowVectorXd>(feature.data(), feature.size()) = w.transpose() * channel_rows(activation);
  feature.values() = feature.values().cwiseMax(0.0);
  return {resize_bilinear(feature, image), class_k, image, MapKind::cam};
}

SaliencyMap lrp_map(const ExplainerSpec& spec, const Network& net, const ForwardTrace& trace, Index class_k,
                    Shape2D image) {
  const Tensor relevance = unstack(lrp_propagate(net, trace, class_k, *spec.epsilon), 0);
  Tensor summed({image.h, image.w});
  for (Index c = 0; c < relevance.dim(0); ++c) summed.plane(0) += relevance.plane(c);
  return {std::move(summed), class_k, image, MapKind::attribution};
}

}  // namespace

std::string to_string(ExplainMethod m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "unknown";
}

ExplainMethod parse_method(const std::string& name) {
  for (const auto& [method, text] : kMethodNames)
    if (name == text) return method;
  throw InvalidArgument("unknown explanation method '" + name +
                        "' (expected gradcam, gradcam-pp, xgradcam, wgradcam or lrp-eps)");
}

void validate(const ExplainerSpec& spec) {
  if (is_cam(spec.method)) {
    require(!spec.epsilon, to_string(spec.method) + " takes no epsilon");
  } else {
    require(!spec.layer, "lrp-eps takes no layer");
    require(!spec.epsilon || *spec.epsilon > 0, "lrp epsilon must be positive");
  }
}

Eigen::VectorXd cam_coefficients(ExplainMethod method, const Tensor& activation, const Tensor& grad) {
  require(activation.rank() == 3 && activation.shape() == grad.shape(),
          "CAM coefficients need matching [C,h,w] activation and gradient");
  const auto a = channel_rows(activation).array();
  const auto g = channel_rows(grad).array();
  switch (method) {
    case ExplainMethod::gradcam:
      return g.rowwise().mean();
    case ExplainMethod::gradcam_pp: {
      const Eigen::ArrayXd a_sum = a.rowwise().sum();
      const Eigen::ArrayXXd g2 = g.square();
      Eigen::ArrayXXd denom = 2.0 * g2 + (g2 * g).colwise() * a_sum;
      denom = (denom != 0.0).select(denom, 1.0);
      return ((g2 / denom) * g.cwiseMax(0.0)).rowwise().sum();
    }
    case ExplainMethod::xgradcam: {
      const Eigen::ArrayXd a_sum = a.rowwise().sum() + 1e-7;
      return ((a.colwise() / a_sum) * g).rowwise().sum();
    }
    case ExplainMethod::wgradcam:
      throw InvalidArgument(kWgradcamUnavailable);
    case ExplainMethod::lrp_eps:
      break;
  }
  throw InvalidArgument(to_string(method) + " is not a CAM method");
}

Explanation explain_with_logits(const ExplainerSpec& spec, const Network& net, const Tensor& image, Index class_k) {
  validate(spec);
  require(class_k >= 0 && class_k < net.num_classes(), "class " + std::to_string(class_k) + " outside [0, " +
                                                           std::to_string(net.num_classes()) + ")");
  require(image.rank() == 3, "explain expects a [C,H,W] image");
  require(image.all_finite(), "image contains non-finite values");
  require(spec.method != ExplainMethod::wgradcam, kWgradcamUnavailable);

  const ForwardTrace trace = forward(net, image);
  const Shape2D shape = image.spatial();
  ExplainerSpec resolved = spec;
  if (!is_cam(spec.method) && !resolved.epsilon) resolved.epsilon = ExplainerSpec::kDefaultLrpEpsilon;
  SaliencyMap map = is_cam(spec.method) ? cam_map(resolved, net, trace, class_k, shape)
                                        : lrp_map(resolved, net, trace, class_k, shape);
  return {std::move(map), trace.logits.values().head(net.num_classes())};
}

SaliencyMap explain(const ExplainerSpec& spec, const Network& net, const Tensor& image, Index class_k) {
  return explain_with_logits(spec, net, image, class_k).map;
}

PatchExplanations explain_patches(const ExplainerSpec& spec, const Network& net, const PatchSet& patches,
                                  Index class_k, Index workers) {
  const Index count = static_cast<Index>(patches.patches.size());
  require(count == patches.grid.count(), "patch set holds " + std::to_string(count) + " patches, grid expects " +
                                             std::to_string(patches.grid.count()));
  for (const Tensor& p : patches.patches)
    require(p.shape() == patches.patches.front().shape(), "patches come from different grids");

  PatchExplanations out{std::vector<SaliencyMap>(static_cast<std::size_t>(count)),
                        Tensor({count, net.num_classes()})};
  parallel_for(count, workers, [&](Index j) {
    const Tensor& patch = patches.patches[static_cast<std::size_t>(j)];
    Explanation e = with_context("patch " + std::to_string(j),
                                 [&] { return explain_with_logits(spec, net, patch, class_k); });
    out.logits.values().segment(j * net.num_classes(), net.num_classes()) = e.logits;
    out.maps[static_cast<std::size_t>(j)] = std::move(e.map);
  });
  return out;
}

}  // namespace ucag
