#pragma once

// Spatial unfoldment into n x n overlapping patches and the inverse fold
// with per-pixel duplication averaging.

#include <memory>
#include <utility>
#include <vector>

#include "ucag/tensor.hpp"

namespace ucag {

/// Per-pixel patch coverage counts (Γ). Stored as reals so it divides maps directly.
struct DuplicationMatrix {
  Tensor counts;  // [H, W], every entry an integer in [1, n^2]
};

struct PatchOffset {
  Index row = 0;
  Index col = 0;
  friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

/// Unfold geometry: n^2 crops of size `patch`, each rescaled to `scaled`.
struct PatchGrid {
  Shape2D image;
  Shape2D patch;        // floor(rho * H), floor(rho * W)
  Shape2D scaled;       // ceil(alpha * H'), ceil(alpha * W')
  Index n = 1;
  double rho = 1.0;
  double alpha = 1.0;
  std::vector<Index> row_offsets;  // n anchors along H
  std::vector<Index> col_offsets;  // n anchors along W
  std::vector<PatchOffset> offsets;  // n^2 anchors, row-major
  std::shared_ptr<const DuplicationMatrix> duplication;  // cached Γ

  Index count() const { return n * n; }
  /// Fold-back target of the partial maps; equals the raw patch size.
  Shape2D beta_target() const { return patch; }
};

struct PatchSet {
  std::vector<Tensor> patches;  // n^2 tensors [C, h, w], one shared shape
  PatchGrid grid;
};

/// Edge-pinned anchors: round(j * (len - extent) / (n - 1)), or {0} when n == 1.
std::vector<Index> axis_offsets(Index len, Index extent, Index n);

/// Number of patches covering each position along one axis.
Eigen::VectorXd axis_coverage(Index len, Index extent, const std::vector<Index>& offsets);

PatchGrid plan_grid(Shape2D image, double rho, Index n, double alpha = 1.0);

DuplicationMatrix duplication_matrix(const PatchGrid& grid);

/// Raw [C, H', W'] crops at the planned offsets (no scaling).
std::vector<Tensor> crop_patches(const Tensor& img, const PatchGrid& grid);

/// Crops then rescales each patch to grid.scaled.
PatchSet unfold(const Tensor& img, const PatchGrid& grid);

/// Scatter-adds n^2 maps of shape [..., H', W'] at their offsets and divides by Γ.
Tensor fold_average(const std::vector<Tensor>& maps, const PatchGrid& grid);

}  // namespace ucag
