#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucag/dataset.hpp"
#include "ucag/network.hpp"

namespace ucag {

struct TrainConfig {
  Index epochs = 10;
  double learning_rate = 0.05;
  Index batch_size = 4;
  std::uint64_t seed = 0;
  bool train_bias = false;  // biases stay zero unless enabled
  std::vector<Index> conv_widths{16, 32, 64};
};

struct TrainResult {
  Network network;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

/// Hex digest of the canonical training configuration, stored in model metadata.
std::string config_digest(const TrainConfig& cfg, Index num_classes, Shape2D image);

/// Plain mini-batch SGD on softmax cross-entropy. Deterministic in cfg.seed:
/// He-uniform init and the per-epoch shuffle both draw from it.
TrainResult train_toy(const std::vector<Sample>& data, Index num_classes, const TrainConfig& cfg);
TrainResult train_toy(const DatasetManifest& manifest, const TrainConfig& cfg);

/// Fraction of samples whose argmax logit equals the label.
double accuracy(const Network& net, const std::vector<Sample>& data);

}  // namespace ucag
