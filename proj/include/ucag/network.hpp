#pragma once

// Miniature convolutional classifier with explicit forward, reverse-mode
// gradient and epsilon-LRP relevance passes.
//
// Layer ids are indices into Network::layers(); the output of layer i is
// trace.activations[i + 1]. kInputLayer names the network input.

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ucag/tensor.hpp"

namespace ucag {

inline constexpr Index kInputLayer = -1;

/// 3x3 convolution, stride 1, zero padding 1.
struct Conv2D {
  static constexpr Index kKernel = 3;
  Tensor weight;  // [out, in, 3, 3]
  Tensor bias;    // [out]

  Index in_channels() const { return weight.dim(1); }
  Index out_channels() const { return weight.dim(0); }
};

struct ReLU {};

/// 2x2 max pool, stride 2. Odd trailing rows/columns are dropped.
struct MaxPool2 {};

struct GlobalAvgPool {};

struct Dense {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  Index in_features() const { return weight.dim(1); }
  Index out_features() const { return weight.dim(0); }
};

using Layer = std::variant<Conv2D, ReLU, MaxPool2, GlobalAvgPool, Dense>;

std::string layer_name(const Layer& layer);

struct NetworkMetadata {
  std::uint64_t seed = 0;
  std::string config_digest;
};

class Network {
 public:
  /// Validates the layer chain: at least one Conv2D, and the tail is
  /// GlobalAvgPool followed by the only Dense layer.
  Network(std::vector<Layer> layers, std::array<Index, 3> input_shape, NetworkMetadata metadata = {});

  const std::vector<Layer>& layers() const { return layers_; }
  Layer& layer(Index i) { return layers_.at(static_cast<std::size_t>(i)); }
  const Layer& layer(Index i) const { return layers_.at(static_cast<std::size_t>(i)); }
  Index layer_count() const { return static_cast<Index>(layers_.size()); }

  Index num_classes() const { return num_classes_; }
  Index input_channels() const { return input_shape_[0]; }
  const std::array<Index, 3>& input_shape() const { return input_shape_; }
  const NetworkMetadata& metadata() const { return metadata_; }
  void set_metadata(NetworkMetadata m) { metadata_ = std::move(m); }

  /// Index of the GlobalAvgPool layer.
  Index pool_index() const { return static_cast<Index>(layers_.size()) - 2; }
  /// Last layer with spatial output (the one feeding global pooling).
  Index last_spatial_layer() const { return pool_index() - 1; }

 private:
  std::vector<Layer> layers_;
  std::array<Index, 3> input_shape_{};
  Index num_classes_ = 0;
  NetworkMetadata metadata_;
};

/// conv16-relu-pool-conv32-relu-pool-conv64-relu-GAP-dense with He-uniform
/// weights drawn from `seed` and zero biases.
Network make_toy_network(Index in_channels, Index num_classes, std::array<Index, 2> image_size,
                         std::uint64_t seed, std::vector<Index> conv_widths = {16, 32, 64});

struct ForwardTrace {
  /// activations[0] is the input batch; activations[i + 1] the output of layer i.
  std::vector<Tensor> activations;
  Tensor logits;  // [B, K]

  const Tensor& input() const { return activations.front(); }
  const Tensor& output(Index layer) const { return activations.at(static_cast<std::size_t>(layer + 1)); }
  Index batch() const { return logits.dim(0); }
};

/// Runs the network on a [B,C,H,W] batch (a single [C,H,W] image is treated
/// as B = 1). Any spatial size that survives the pooling layers is accepted.
ForwardTrace forward(const Network& net, const Tensor& batch);

/// Logits only, without retaining the trace.
Tensor predict_logits(const Network& net, const Tensor& batch);

/// Runs layers after `layer` on an activation of that layer's output; returns logits.
Tensor forward_from(const Network& net, Index layer, const Tensor& activation);

struct ParameterGradients {
  std::vector<Tensor> weight;  // per layer; empty for parameterless layers
  std::vector<Tensor> bias;
};

/// Reverse-mode pass seeded with d(loss)/d(logits) [B,K]; returns the
/// gradient w.r.t. the output of `stop_layer` (kInputLayer for the input).
/// Parameter gradients of the traversed layers are accumulated into `params`
/// when it is non-null.
Tensor backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_logits, Index stop_layer,
                ParameterGradients* params = nullptr);

/// Gradient of the pre-softmax logit `class_k` w.r.t. the output of `layer`.
Tensor grad_wrt_activation(const Network& net, const ForwardTrace& trace, Index class_k, Index layer);

/// Epsilon-rule relevance at every layer boundary, from the output
/// (one-hot logit of class_k) down to the input: result[i] pairs with
/// trace.activations[i].
std::vector<Tensor> lrp_relevances(const Network& net, const ForwardTrace& trace, Index class_k, double epsilon);

/// Input-resolution relevance, same shape as trace.input().
Tensor lrp_propagate(const Network& net, const ForwardTrace& trace, Index class_k, double epsilon);

}  // namespace ucag
