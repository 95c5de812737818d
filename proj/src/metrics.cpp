#include "ucag/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ucag/errors.hpp"
#include "ucag/parallel.hpp"

namespace ucag {
namespace {

void require_image_sized(const SaliencyMap& map, const Tensor& image) {
  require(image.rank() == 3, "expected a [C,H,W] image");
  require(map.values.rank() == 2 && map.shape() == image.spatial(), "saliency map is not image-sized");
}

void require_mask_sized(const SaliencyMap& map, const BinaryMask& mask) {
  require(map.values.rank() == 2 && map.shape() == mask.shape, "mask does not match the map size");
}

// Sets pixel `idx` (all channels) of `dst` from `src`.
void copy_pixel(Tensor& dst, const Tensor& src, Index idx) {
  const Index area = dst.spatial().area();
  for (Index c = 0; c < dst.dim(0); ++c) dst[c * area + idx] = src[c * area + idx];
}

Tensor apply_mask(const Tensor& image, const Tensor& soft_mask) {
  require(image.rank() == 3 && soft_mask.rank() == 2 && image.spatial() == soft_mask.spatial(),
          "density mask does not match the image");
  Tensor out = image;
  for (Index c = 0; c < out.dim(0); ++c) out.plane(c).array() *= soft_mask.plane(0).array();
  return out;
}

}  // namespace

double Scorer::probability(const Tensor& image, Index class_k) const {
  const Tensor p = probabilities(image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                                                   : image);
  require(class_k >= 0 && class_k < p.dim(1), "class " + std::to_string(class_k) + " outside [0, " +
                                                  std::to_string(p.dim(1)) + ")");
  return p(0, class_k);
}

Tensor NetworkScorer::probabilities(const Tensor& batch) const {
  Tensor logits = predict_logits(net_, batch);
  const Index k = logits.dim(1);
  for (Index b = 0; b < logits.dim(0); ++b)
    logits.values().segment(b * k, k) = softmax(Eigen::VectorXd(logits.values().segment(b * k, k)));
  return logits;
}

Tensor FunctionScorer::probabilities(const Tensor& batch) const {
  require(batch.rank() == 4, "expected a [B,C,H,W] batch");
  std::vector<Eigen::VectorXd> rows;
  for (Index b = 0; b < batch.dim(0); ++b) rows.push_back(fn_(unstack(batch, b)));
  const Index k = rows.empty() ? 0 : rows.front().size();
  Tensor out({batch.dim(0), k});
  for (Index b = 0; b < batch.dim(0); ++b) {
    require(rows[static_cast<std::size_t>(b)].size() == k, "scorer returned rows of different lengths");
    out.values().segment(b * k, k) = rows[static_cast<std::size_t>(b)];
  }
  return out;
}

void PerturbationConfig::validate() const {
  require(step_fraction > 0 && step_fraction <= 1, "step fraction must lie in (0, 1]");
  require(blur_kernel >= 1 && blur_kernel % 2 == 1, "blur kernel size must be odd and positive");
  require(blur_sigma > 0, "blur sigma must be positive");
  require(batch >= 1, "perturbation batch must be >= 1");
}

std::vector<Index> saliency_ranking(const Tensor& map) {
  std::vector<Index> order(static_cast<std::size_t>(map.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return map[a] > map[b]; });
  return order;
}

Index perturbation_step(double step_fraction, Index pixels) {
  const auto step = static_cast<Index>(std::ceil(step_fraction * static_cast<double>(pixels) - 1e-9));
  return std::clamp<Index>(step, 1, std::max<Index>(pixels, 1));
}

PerturbationCurves perturbation_curves(const Scorer& scorer, const Tensor& image, const SaliencyMap& map,
                                       Index class_k, const PerturbationConfig& cfg) {
  cfg.validate();
  require_image_sized(map, image);
  require(map.values.all_finite(), "saliency map contains non-finite values");
  const Index pixels = image.spatial().area();
  const Index step = perturbation_step(cfg.step_fraction, pixels);
  const Index steps = (pixels + step - 1) / step;
  const std::vector<Index> rank = saliency_ranking(map.values);

  PerturbationCurves out;
  for (Index i = 0; i <= steps; ++i)
    out.fraction.push_back(static_cast<double>(std::min(i * step, pixels)) / static_cast<double>(pixels));

  // Walks the ranking once, scoring `cfg.batch` snapshots per forward call.
  auto trace = [&](Tensor state, const Tensor& source, std::vector<double>& probs) {
    std::vector<Tensor> pending;
    auto flush = [&] {
      if (pending.empty()) return;
      const Tensor p = scorer.probabilities(stack(pending));
      require(class_k >= 0 && class_k < p.dim(1), "class " + std::to_string(class_k) + " outside [0, " +
                                                      std::to_string(p.dim(1)) + ")");
      for (Index b = 0; b < p.dim(0); ++b) probs.push_back(p(b, class_k));
      pending.clear();
    };
    pending.push_back(state);
    for (Index i = 1; i <= steps; ++i) {
      for (Index r = (i - 1) * step; r < std::min(i * step, pixels); ++r)
        copy_pixel(state, source, rank[static_cast<std::size_t>(r)]);
      pending.push_back(state);
      if (static_cast<Index>(pending.size()) >= cfg.batch) flush();
    }
    flush();
  };

  trace(image, Tensor(image.shape()), out.deletion);
  trace(gaussian_blur(image, cfg.blur_kernel, cfg.blur_sigma), image, out.insertion);
  return out;
}

double trapezoid_auc(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "AUC needs at least two matching points");
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return area;
}

AucPair deletion_insertion(const Scorer& scorer, const Tensor& image, const SaliencyMap& map, Index class_k,
                           const PerturbationConfig& cfg) {
  const PerturbationCurves c = perturbation_curves(scorer, image, map, class_k, cfg);
  return {trapezoid_auc(c.fraction, c.deletion), trapezoid_auc(c.fraction, c.insertion)};
}

bool pointing_game(const SaliencyMap& map, const BinaryMask& region) {
  require_mask_sized(map, region);
  require(region.count() > 0, "pointing game region is empty");
  return region.bits[static_cast<std::size_t>(argmax_index(map.values))] != 0;
}

bool pointing_game(const SaliencyMap& map, const BoundingBox& region) {
  require(region.h > 0 && region.w > 0, "pointing game region is empty");
  return pointing_game(map, mask_from_box(map.shape(), region));
}

double energy_pointing_game(const SaliencyMap& map, const BinaryMask& mask) {
  require_mask_sized(map, mask);
  double inside = 0.0, total = 0.0;
  for (Index i = 0; i < map.values.size(); ++i) {
    const double v = std::max(map.values[i], 0.0);
    total += v;
    if (mask.bits[static_cast<std::size_t>(i)]) inside += v;
  }
  return total > 0 ? inside / total : 0.0;
}

double positive_density(const Scorer& scorer, const Tensor& image, const Tensor& soft_mask, Index class_k) {
  const double mass = soft_mask.sum();
  if (!(mass > 0)) throw UndefinedDensity("positive density is undefined for a mask with zero mass");
  const double area = static_cast<double>(soft_mask.size());
  return scorer.probability(apply_mask(image, soft_mask), class_k) * area / mass;
}

double negative_density(const Scorer& scorer, const Tensor& image, const Tensor& soft_mask, Index class_k) {
  Tensor inverse = soft_mask;
  inverse.values() = 1.0 - soft_mask.values().array();
  const double mass = inverse.sum();
  if (!(mass > 0)) throw UndefinedDensity("negative density is undefined for a mask covering the whole image");
  const double area = static_cast<double>(inverse.size());
  return scorer.probability(apply_mask(image, inverse), class_k) * area / mass;
}

Density map_density(const Scorer& scorer, const Tensor& image, const SaliencyMap& map, Index class_k) {
  require_image_sized(map, image);
  const Tensor m = normalize_minmax(map.values);
  return {positive_density(scorer, image, m, class_k), negative_density(scorer, image, m, class_k)};
}

SegmentationScores segmentation_scores(const SaliencyMap& map, const BinaryMask& mask) {
  require_mask_sized(map, mask);
  const Index positives = mask.count();
  require(positives > 0, "segmentation mask has no foreground");
  const Tensor norm = normalize_minmax(map.values);
  const std::vector<Index> order = saliency_ranking(norm);
  const auto total = static_cast<Index>(order.size());

  SegmentationScores out;
  Index predicted = 0, hits = 0;
  double last_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    // Thresholding at this value admits the whole run of equal values.
    const double t = norm[order[i]];
    while (i < order.size() && norm[order[i]] == t) {
      hits += mask.bits[static_cast<std::size_t>(order[i])];
      ++predicted;
      ++i;
    }
    const double recall = static_cast<double>(hits) / static_cast<double>(positives);
    const double precision = static_cast<double>(hits) / static_cast<double>(predicted);
    out.ap += (recall - last_recall) * precision;
    last_recall = recall;
  }

  const double mean = norm.sum() / static_cast<double>(total);
  Index correct = 0;
  for (Index i = 0; i < total; ++i) correct += (norm[i] >= mean) == (mask.bits[static_cast<std::size_t>(i)] != 0);
  out.pixel_acc = static_cast<double>(correct) / static_cast<double>(total);
  return out;
}

std::vector<SweepRow> resolution_sweep(const Network& net, const ExplainerSpec& explainer,
                                       const std::vector<LabelledImage>& images, const std::vector<double>& scales,
                                       const PerturbationConfig& cfg, Index workers) {
  require(!scales.empty(), "no scales to sweep");
  require(!images.empty(), "no images to sweep");
  for (double a : scales) require(a >= 1.0 && std::isfinite(a), "sweep scales must be >= 1");
  cfg.validate();
  const NetworkScorer scorer(net);

  std::vector<SweepRow> rows;
  for (double alpha : scales) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<AucPair> per(images.size());
    parallel_for(static_cast<Index>(images.size()), workers, [&](Index i) {
      const LabelledImage& li = images[static_cast<std::size_t>(i)];
      const Shape2D shape = li.image.spatial();
      const Shape2D up{static_cast<Index>(std::ceil(alpha * static_cast<double>(shape.h) - 1e-9)),
                       static_cast<Index>(std::ceil(alpha * static_cast<double>(shape.w) - 1e-9))};
      SaliencyMap map = explain(explainer, net, resize_bilinear(li.image, up), li.class_k);
      map.values = resize_bilinear(map.values, shape);
      map.source_shape = shape;
      per[static_cast<std::size_t>(i)] = deletion_insertion(scorer, li.image, map, li.class_k, cfg);
    });
    SweepRow row{alpha, 0.0, 0.0, 0.0};
    for (const AucPair& p : per) {
      row.deletion_auc += p.deletion;
      row.insertion_auc += p.insertion;
    }
    row.deletion_auc /= static_cast<double>(per.size());
    row.insertion_auc /= static_cast<double>(per.size());
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepCsvHeader << "\n";
  for (const SweepRow& r : rows)
    out << nlohmann::json(r.alpha).dump() << "," << nlohmann::json(r.deletion_auc).dump() << ","
        << nlohmann::json(r.insertion_auc).dump() << "\n";
  return out.str();
}

nlohmann::ordered_json EvalRecord::to_json() const {
  nlohmann::ordered_json j{{"id", id}, {"variant", variant}, {"class", class_k}};
  auto put = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  put("deletion_auc", deletion_auc);
  put("insertion_auc", insertion_auc);
  put("pg_hit", pg_hit);
  put("ebpg", ebpg);
  put("density_pos", density_pos);
  put("density_neg", density_neg);
  put("ap", ap);
  put("pixel_acc", pixel_acc);
  return j;
}

}  // namespace ucag
