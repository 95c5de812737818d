#pragma once

// Evaluation protocols: deletion/insertion games, pointing games, map
// density, segmentation scores and the resolution sweep.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucag/dataio.hpp"
#include "ucag/explainers.hpp"
#include "ucag/network.hpp"
#include "ucag/saliency.hpp"

namespace ucag {

/// Anything that maps a [B,C,H,W] batch to [B,K] class probabilities.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual Tensor probabilities(const Tensor& batch) const = 0;
  double probability(const Tensor& image, Index class_k) const;
};

/// Softmax over the network's logits.
class NetworkScorer final : public Scorer {
 public:
  explicit NetworkScorer(const Network& net) : net_(net) {}
  Tensor probabilities(const Tensor& batch) const override;

 private:
  const Network& net_;
};

/// Wraps a per-image function returning a probability vector.
class FunctionScorer final : public Scorer {
 public:
  using Fn = std::function<Eigen::VectorXd(const Tensor& image)>;
  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
  Tensor probabilities(const Tensor& batch) const override;

 private:
  Fn fn_;
};

struct PerturbationConfig {
  double step_fraction = 0.01;
  Index blur_kernel = 51;  // insertion baseline
  double blur_sigma = 50.0;
  Index batch = 16;  // perturbed images per forward call

  void validate() const;
};

/// Pixel indices sorted by descending saliency; ties by ascending index.
std::vector<Index> saliency_ranking(const Tensor& map);

/// Pixels changed per step: ceil(fraction * P), at least 1.
Index perturbation_step(double step_fraction, Index pixels);

struct PerturbationCurves {
  std::vector<double> fraction;   // x: share of pixels perturbed, 0 .. 1
  std::vector<double> deletion;   // class probability after each step
  std::vector<double> insertion;
};

PerturbationCurves perturbation_curves(const Scorer& scorer, const Tensor& image, const SaliencyMap& map,
                                       Index class_k, const PerturbationConfig& cfg = {});

/// Trapezoidal area under (x, y).
double trapezoid_auc(const std::vector<double>& x, const std::vector<double>& y);

struct AucPair {
  double deletion = 0.0;
  double insertion = 0.0;
};

AucPair deletion_insertion(const Scorer& scorer, const Tensor& image, const SaliencyMap& map, Index class_k,
                           const PerturbationConfig& cfg = {});

bool pointing_game(const SaliencyMap& map, const BinaryMask& region);
bool pointing_game(const SaliencyMap& map, const BoundingBox& region);

/// Share of the clamped-positive saliency mass inside the mask; 0 for an all-zero map.
double energy_pointing_game(const SaliencyMap& map, const BinaryMask& mask);

/// f(I * M) * (h w) / sum(M) with M an [H,W] soft mask in [0,1]. Throws
/// UndefinedDensity when sum(M) is 0.
double positive_density(const Scorer& scorer, const Tensor& image, const Tensor& soft_mask, Index class_k);
/// f(I * (1 - M)) * (h w) / sum(1 - M). Throws UndefinedDensity when sum(1 - M) is 0.
double negative_density(const Scorer& scorer, const Tensor& image, const Tensor& soft_mask, Index class_k);

struct Density {
  double pos = 0.0;
  double neg = 0.0;
};

/// Min-max normalises the map to form M, then evaluates both densities.
Density map_density(const Scorer& scorer, const Tensor& image, const SaliencyMap& map, Index class_k);

struct SegmentationScores {
  double ap = 0.0;
  double pixel_acc = 0.0;
};

/// AP over every distinct normalised saliency value as threshold (pixels >=
/// threshold are foreground); pixel accuracy at threshold = map mean.
SegmentationScores segmentation_scores(const SaliencyMap& map, const BinaryMask& mask);

struct SweepRow {
  double alpha = 1.0;
  double deletion_auc = 0.0;
  double insertion_auc = 0.0;
  double seconds = 0.0;  // wall clock, informational
};

struct LabelledImage {
  Tensor image;
  Index class_k = 0;
};

/// For each scale, explains the alpha-upscaled image, resizes the map back and
/// averages both AUCs over the images.
std::vector<SweepRow> resolution_sweep(const Network& net, const ExplainerSpec& explainer,
                                       const std::vector<LabelledImage>& images, const std::vector<double>& scales,
                                       const PerturbationConfig& cfg = {}, Index workers = 1);

inline constexpr std::string_view kSweepCsvHeader = "alpha,deletion_auc,insertion_auc";
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Per-sample metric values; absent fields were not requested or undefined.
struct EvalRecord {
  std::string id;
  std::string variant;  // "base" or "ucag"
  Index class_k = 0;
  std::optional<double> deletion_auc;
  std::optional<double> insertion_auc;
  std::optional<bool> pg_hit;
  std::optional<double> ebpg;
  std::optional<double> density_pos;
  std::optional<double> density_neg;
  std::optional<double> ap;
  std::optional<double> pixel_acc;

  nlohmann::ordered_json to_json() const;
};

}  // namespace ucag
