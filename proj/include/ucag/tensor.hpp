#pragma once

// Dense tensor substrate. Storage is a single Eigen column vector in
// row-major [N?, C, H, W] order; the last two axes are always spatial.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "ucag/errors.hpp"

namespace ucag {

using Index = Eigen::Index;

struct Shape2D {
  Index h = 1;
  Index w = 1;

  Index area() const { return h * w; }
  bool valid() const { return h >= 1 && w >= 1; }
  friend bool operator==(const Shape2D&, const Shape2D&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Shape2D& s) {
  return os << s.h << "x" << s.w;
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Plane = Eigen::Map<RowMatrix<Scalar>>;
  using ConstPlane = Eigen::Map<const RowMatrix<Scalar>>;

  static constexpr Index kMaxRank = 4;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<Index> shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)) {
    check_shape();
    values_ = Vector::Constant(product(shape_), fill);
  }

  BasicTensor(std::vector<Index> shape, Vector values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    require(values_.size() == product(shape_),
            "tensor data length " + std::to_string(values_.size()) +
                " does not match shape product " + std::to_string(product(shape_)));
  }

  BasicTensor(std::vector<Index> shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Vector(Eigen::Map<const Vector>(
                                          values.begin(), static_cast<Index>(values.size())))) {}

  /// Rank-2 tensor copied from any Eigen matrix expression.
  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t({m.rows(), m.cols()});
    t.plane(0) = m;
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  /// Extent of `axis`; negative axes count from the end.
  Index dim(Index axis) const {
    if (axis < 0) axis += rank();
    require(axis >= 0 && axis < rank(), "tensor axis out of range");
    return shape_[static_cast<std::size_t>(axis)];
  }

  Shape2D spatial() const {
    require(rank() >= 2, "spatial() needs rank >= 2");
    return {dim(-2), dim(-1)};
  }

  /// Number of HxW planes (product of all leading axes).
  Index planes() const { return size() / spatial().area(); }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return values_[offset(ix...)];
  }
  template <typename... Ix>
  Scalar operator()(Ix... ix) const {
    return values_[offset(ix...)];
  }

  Plane plane(Index p) {
    const Shape2D s = spatial();
    return Plane(values_.data() + p * s.area(), s.h, s.w);
  }
  ConstPlane plane(Index p) const {
    const Shape2D s = spatial();
    return ConstPlane(values_.data() + p * s.area(), s.h, s.w);
  }

  BasicTensor reshaped(std::vector<Index> shape) const { return BasicTensor(std::move(shape), values_); }

  bool all_finite() const { return values_.allFinite(); }

  Scalar min() const { return values_.minCoeff(); }
  Scalar max() const { return values_.maxCoeff(); }
  Scalar sum() const { return values_.sum(); }

  BasicTensor& operator+=(const BasicTensor& o) {
    require(shape_ == o.shape_, "shape mismatch in +=");
    values_ += o.values_;
    return *this;
  }
  BasicTensor& operator-=(const BasicTensor& o) {
    require(shape_ == o.shape_, "shape mismatch in -=");
    values_ -= o.values_;
    return *this;
  }
  BasicTensor& operator*=(Scalar s) {
    values_ *= s;
    return *this;
  }

  friend BasicTensor operator+(BasicTensor a, const BasicTensor& b) { return a += b; }
  friend BasicTensor operator-(BasicTensor a, const BasicTensor& b) { return a -= b; }
  friend BasicTensor operator*(BasicTensor a, Scalar s) { return a *= s; }
  friend BasicTensor operator*(Scalar s, BasicTensor a) { return a *= s; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  static Index product(const std::vector<Index>& s) {
    return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
  }

  void check_shape() const {
    require(!shape_.empty() && rank() <= kMaxRank, "tensor rank must be in [1, 4]");
    for (Index e : shape_) require(e >= 0, "negative tensor extent");
  }

  template <typename... Ix>
  Index offset(Ix... ix) const {
    static_assert(sizeof...(Ix) >= 1 && sizeof...(Ix) <= kMaxRank);
    const Index idx[] = {static_cast<Index>(ix)...};
    Index off = 0;
    for (std::size_t a = 0; a < sizeof...(Ix); ++a) off = off * shape_[a] + idx[a];
    return off;
  }

  std::vector<Index> shape_{0};
  Vector values_;
};

using Tensor = BasicTensor<double>;

template <typename Scalar>
std::ostream& operator<<(std::ostream& os, const BasicTensor<Scalar>& t) {
  os << "Tensor[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) os << (i ? "," : "") << t.shape()[i];
  return os << "]";
}

/// Shape with the trailing two (spatial) extents replaced.
inline std::vector<Index> with_spatial(std::vector<Index> shape, Shape2D s) {
  require(shape.size() >= 2, "spatial shape needs rank >= 2");
  shape[shape.size() - 2] = s.h;
  shape[shape.size() - 1] = s.w;
  return shape;
}

// ---------------------------------------------------------------------------
// Bilinear resize (half-pixel centres, border clamped)

/// Row-stochastic (out x in) matrix mapping a 1-D signal of length `in` to
/// length `out`: src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1].
template <typename Scalar = double>
RowMatrix<Scalar> interpolation_matrix(Index in, Index out) {
  require(in >= 1 && out >= 1, "interpolation extents must be >= 1");
  RowMatrix<Scalar> m = RowMatrix<Scalar>::Zero(out, in);
  const Scalar scale = static_cast<Scalar>(in) / static_cast<Scalar>(out);
  for (Index d = 0; d < out; ++d) {
    Scalar src = (static_cast<Scalar>(d) + Scalar(0.5)) * scale - Scalar(0.5);
    src = std::clamp(src, Scalar(0), static_cast<Scalar>(in - 1));
    const auto i0 = static_cast<Index>(std::floor(src));
    const Index i1 = std::min(i0 + 1, in - 1);
    const Scalar frac = src - static_cast<Scalar>(i0);
    m(d, i0) += Scalar(1) - frac;
    m(d, i1) += frac;
  }
  return m;
}

/// Resizes every HxW plane of `t` to `out`; leading axes are untouched.
template <typename Scalar>
BasicTensor<Scalar> resize_bilinear(const BasicTensor<Scalar>& t, Shape2D out) {
  require(out.valid(), "resize_bilinear: output size must be at least 1x1");
  const Shape2D in = t.spatial();
  require(in.valid(), "resize_bilinear: empty input");
  BasicTensor<Scalar> result(with_spatial(t.shape(), out));
  if (in == out) {
    result.values() = t.values();
    return result;
  }
  const RowMatrix<Scalar> rows = interpolation_matrix<Scalar>(in.h, out.h);
  const RowMatrix<Scalar> cols = interpolation_matrix<Scalar>(in.w, out.w);
  for (Index p = 0; p < t.planes(); ++p) result.plane(p).noalias() = rows * t.plane(p) * cols.transpose();
  return result;
}

// ---------------------------------------------------------------------------
// Gaussian blur

/// Normalised 1-D Gaussian taps of odd length `ksize`.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gaussian_kernel(Index ksize, Scalar sigma) {
  require(ksize >= 1 && ksize % 2 == 1, "gaussian kernel size must be odd and positive");
  require(sigma > 0, "gaussian sigma must be positive");
  const Index radius = ksize / 2;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> k(ksize);
  for (Index i = 0; i < ksize; ++i) {
    const auto x = static_cast<Scalar>(i - radius);
    k[i] = std::exp(-(x * x) / (Scalar(2) * sigma * sigma));
  }
  return k / k.sum();
}

/// Symmetric reflection (edge sample repeated) of an out-of-range index.
inline Index reflect_index(Index i, Index n) {
  const Index period = 2 * n;
  Index m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

/// (n x n) matrix applying the 1-D kernel with reflect padding folded in.
template <typename Scalar>
RowMatrix<Scalar> blur_matrix(Index n, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& kernel) {
  const Index radius = kernel.size() / 2;
  RowMatrix<Scalar> m = RowMatrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < kernel.size(); ++t) m(i, reflect_index(i + t - radius, n)) += kernel[t];
  return m;
}

template <typename Scalar>
BasicTensor<Scalar> gaussian_blur(const BasicTensor<Scalar>& img, Index ksize, Scalar sigma) {
  const auto kernel = gaussian_kernel<Scalar>(ksize, sigma);
  const Shape2D s = img.spatial();
  const RowMatrix<Scalar> rows = blur_matrix<Scalar>(s.h, kernel);
  const RowMatrix<Scalar> cols = blur_matrix<Scalar>(s.w, kernel);
  BasicTensor<Scalar> out(img.shape());
  for (Index p = 0; p < img.planes(); ++p) out.plane(p).noalias() = rows * img.plane(p) * cols.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Softmax / normalisation

/// Max-shifted softmax. Probabilities are floored at the smallest normal
/// double so every entry stays strictly positive.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  require(v.size() > 0, "softmax of an empty vector");
  const Scalar peak = v.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (v.derived().array() - peak).exp().matrix();
  e /= e.sum();
  return e.cwiseMax(std::numeric_limits<Scalar>::min());
}

template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& v) {
  require(v.rank() == 1, "softmax expects a rank-1 tensor");
  return BasicTensor<Scalar>(v.shape(), softmax(v.values()));
}

/// Affine rescale to [0, 1]; a constant input maps to all zeros.
template <typename Scalar>
BasicTensor<Scalar> normalize_minmax(const BasicTensor<Scalar>& map) {
  BasicTensor<Scalar> out(map.shape());
  if (map.empty()) return out;
  const Scalar lo = map.min();
  const Scalar range = map.max() - lo;
  if (range > Scalar(0)) out.values() = (map.values().array() - lo) / range;
  return out;
}

// ---------------------------------------------------------------------------
// Batch helpers

/// Stacks equally-shaped [C,H,W] tensors into [B,C,H,W].
template <typename Scalar>
BasicTensor<Scalar> stack(const std::vector<BasicTensor<Scalar>>& items) {
  require(!items.empty(), "stack of an empty list");
  const auto& first = items.front().shape();
  require(first.size() == 3, "stack expects [C,H,W] items");
  BasicTensor<Scalar> out({static_cast<Index>(items.size()), first[0], first[1], first[2]});
  const Index step = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require(items[i].shape() == first, "stack: items differ in shape");
    out.values().segment(static_cast<Index>(i) * step, step) = items[i].values();
  }
  return out;
}

/// Item `i` of a [B,...] batch, with the batch axis dropped.
template <typename Scalar>
BasicTensor<Scalar> unstack(const BasicTensor<Scalar>& batch, Index i) {
  require(batch.rank() >= 2, "unstack expects a batch");
  require(i >= 0 && i < batch.dim(0), "batch index out of range");
  std::vector<Index> shape(batch.shape().begin() + 1, batch.shape().end());
  const Index step = batch.size() / batch.dim(0);
  return BasicTensor<Scalar>(std::move(shape), typename BasicTensor<Scalar>::Vector(batch.values().segment(i * step, step)));
}

}  // namespace ucag
