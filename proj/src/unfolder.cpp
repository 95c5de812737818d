#include "ucag/unfolder.hpp"

#include <cmath>
#include <string>

namespace ucag {
namespace {

// Tolerance absorbing binary representation error of rho/alpha products
// (0.29 * 100 evaluates to 28.999999999999996).
constexpr double kSizeSlack = 1e-9;

Index floor_extent(double factor, Index len) {
  return static_cast<Index>(std::floor(factor * static_cast<double>(len) + kSizeSlack));
}

Index ceil_extent(double factor, Index len) {
  return static_cast<Index>(std::ceil(factor * static_cast<double>(len) - kSizeSlack));
}

}  // namespace

std::vector<Index> axis_offsets(Index len, Index extent, Index n) {
  require(n >= 1, "patches per axis must be >= 1");
  require(extent >= 1 && extent <= len, "patch extent must lie in [1, axis length]");
  std::vector<Index> offsets(static_cast<std::size_t>(n), 0);
  if (n == 1) return offsets;
  const double stride = static_cast<double>(len - extent) / static_cast<double>(n - 1);
  for (Index j = 0; j < n; ++j) offsets[static_cast<std::size_t>(j)] = std::llround(static_cast<double>(j) * stride);
  return offsets;
}

Eigen::VectorXd axis_coverage(Index len, Index extent, const std::vector<Index>& offsets) {
  Eigen::VectorXd cover = Eigen::VectorXd::Zero(len);
  for (Index o : offsets) cover.segment(o, extent).array() += 1.0;
  return cover;
}

PatchGrid plan_grid(Shape2D image, double rho, Index n, double alpha) {
  require(image.valid(), "image must be at least 1x1");
  require(rho > 0.0 && rho <= 1.0, "rho must lie in (0, 1], got " + std::to_string(rho));
  require(n >= 1, "n must be >= 1, got " + std::to_string(n));
  require(alpha >= 1.0, "alpha must be >= 1, got " + std::to_string(alpha));

  PatchGrid g;
  g.image = image;
  g.rho = rho;
  g.alpha = alpha;
  g.n = n;
  g.patch = {floor_extent(rho, image.h), floor_extent(rho, image.w)};
  require(g.patch.valid(), "rho too small: patch would be empty");
  g.scaled = {ceil_extent(alpha, g.patch.h), ceil_extent(alpha, g.patch.w)};
  g.row_offsets = axis_offsets(image.h, g.patch.h, n);
  g.col_offsets = axis_offsets(image.w, g.patch.w, n);
  g.offsets.reserve(static_cast<std::size_t>(n * n));
  for (Index r : g.row_offsets)
    for (Index c : g.col_offsets) g.offsets.push_back({r, c});
  g.duplication = std::make_shared<const DuplicationMatrix>(duplication_matrix(g));
  require(g.duplication->counts.min() >= 1.0,
          "grid leaves pixels uncovered: " + std::to_string(n) + " patches of " + std::to_string(g.patch.h) + "x" +
              std::to_string(g.patch.w) + " cannot span " + std::to_string(image.h) + "x" + std::to_string(image.w));
  return g;
}

DuplicationMatrix duplication_matrix(const PatchGrid& grid) {
  const Eigen::VectorXd rows = axis_coverage(grid.image.h, grid.patch.h, grid.row_offsets);
  const Eigen::VectorXd cols = axis_coverage(grid.image.w, grid.patch.w, grid.col_offsets);
  return {Tensor::from_matrix(rows * cols.transpose())};
}

std::vector<Tensor> crop_patches(const Tensor& img, const PatchGrid& grid) {
  require(img.rank() == 3, "unfold expects a [C,H,W] image");
  require(img.spatial() == grid.image, "image is " + std::to_string(img.dim(1)) + "x" +
                                           std::to_string(img.dim(2)) + " but grid was planned for " +
                                           std::to_string(grid.image.h) + "x" + std::to_string(grid.image.w));
  const Index channels = img.dim(0);
  std::vector<Tensor> crops;
  crops.reserve(grid.offsets.size());
  for (const PatchOffset& o : grid.offsets) {
    Tensor crop({channels, grid.patch.h, grid.patch.w});
    for (Index c = 0; c < channels; ++c)
      crop.plane(c) = img.plane(c).block(o.row, o.col, grid.patch.h, grid.patch.w);
    crops.push_back(std::move(crop));
  }
  return crops;
}

PatchSet unfold(const Tensor& img, const PatchGrid& grid) {
  PatchSet set{crop_patches(img, grid), grid};
  for (Tensor& p : set.patches) p = resize_bilinear(p, grid.scaled);
  return set;
}

Tensor fold_average(const std::vector<Tensor>& maps, const PatchGrid& grid) {
  require(static_cast<Index>(maps.size()) == grid.count(),
          "fold_average: expected " + std::to_string(grid.count()) + " maps, got " + std::to_string(maps.size()));
  const auto& lead = maps.front().shape();
  require(maps.front().rank() >= 2 && maps.front().spatial() == grid.patch,
          "fold_average: maps must have the raw patch size");
  Tensor out(with_spatial(lead, grid.image));
  for (std::size_t j = 0; j < maps.size(); ++j) {
    require(maps[j].shape() == lead, "fold_average: map " + std::to_string(j) + " has a different shape");
    const PatchOffset& o = grid.offsets[j];
    for (Index p = 0; p < out.planes(); ++p)
      out.plane(p).block(o.row, o.col, grid.patch.h, grid.patch.w) += maps[j].plane(p);
  }
  const auto& gamma = grid.duplication ? grid.duplication->counts : duplication_matrix(grid).counts;
  for (Index p = 0; p < out.planes(); ++p) out.plane(p).array() /= gamma.plane(0).array();
  return out;
}

}  // namespace ucag
