#include "ucag/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "ucag/errors.hpp"
#include "ucag/random.hpp"

namespace ucag {

std::string config_digest(const TrainConfig& cfg, Index num_classes, Shape2D image) {
  const nlohmann::json doc{{"epochs", cfg.epochs},         {"learning_rate", cfg.learning_rate},
                           {"batch_size", cfg.batch_size}, {"seed", cfg.seed},
                           {"train_bias", cfg.train_bias}, {"conv_widths", cfg.conv_widths},
                           {"num_classes", num_classes},   {"image", {image.h, image.w}}};
  // 64-bit FNV-1a over the canonical dump.
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : doc.dump()) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

double accuracy(const Network& net, const std::vector<Sample>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Sample& s : data) {
    const Tensor logits = predict_logits(net, s.image);
    Index best = 0;
    for (Index k = 1; k < logits.dim(1); ++k)
      if (logits(0, k) > logits(0, best)) best = k;
    correct += best == s.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_toy(const std::vector<Sample>& data, Index num_classes, const TrainConfig& cfg) {
  require(!data.empty(), "training set is empty");
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(cfg.batch_size >= 1, "batch size must be >= 1");
  require(cfg.learning_rate > 0, "learning rate must be positive");
  const Shape2D image = data.front().image.spatial();
  for (const Sample& s : data) {
    require(s.label >= 0 && s.label < num_classes, "label out of range in training data");
    require(s.image.shape() == data.front().image.shape(), "training images differ in shape");
  }

  Network net = make_toy_network(data.front().image.dim(0), num_classes, {image.h, image.w}, cfg.seed, cfg.conv_widths);
  net.set_metadata({cfg.seed, config_digest(cfg, num_classes, image)});
  // The shuffle stream is separate from the init stream so architecture changes
  // do not perturb the sample order.
  Rng order_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0u);
  TrainResult result{std::move(net), 0.0, {}};
  Network& model = result.network;

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor> images;
      for (std::size_t i = start; i < stop; ++i) images.push_back(data[order[i]].image);
      const ForwardTrace trace = forward(model, stack(images));
      const auto batch = static_cast<Index>(stop - start);

      Tensor grad(trace.logits.shape());
      for (Index b = 0; b < batch; ++b) {
        const Eigen::VectorXd p = softmax(Eigen::VectorXd(trace.logits.values().segment(b * num_classes, num_classes)));
        const Index label = data[order[start + static_cast<std::size_t>(b)]].label;
        loss_sum -= std::log(p[label]);
        for (Index k = 0; k < num_classes; ++k)
          grad(b, k) = (p[k] - (k == label ? 1.0 : 0.0)) / static_cast<double>(batch);
      }

      ParameterGradients params;
      backward(model, trace, grad, kInputLayer, &params);
      for (Index i = 0; i < model.layer_count(); ++i) {
        const auto slot = static_cast<std::size_t>(i);
        auto step = [&](Tensor& w, Tensor& b) {
          w.values() -= cfg.learning_rate * params.weight[slot].values();
          if (cfg.train_bias) b.values() -= cfg.learning_rate * params.bias[slot].values();
        };
        if (auto* c = std::get_if<Conv2D>(&model.layer(i))) step(c->weight, c->bias);
        if (auto* d = std::get_if<Dense>(&model.layer(i))) step(d->weight, d->bias);
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
  }
  result.train_accuracy = accuracy(model, data);
  return result;
}

TrainResult train_toy(const DatasetManifest& manifest, const TrainConfig& cfg) {
  require(!manifest.entries.empty(), "manifest has no entries");
  return train_toy(load_samples(manifest), static_cast<Index>(manifest.classes.size()), cfg);
}

}  // namespace ucag
