#pragma once

#include <string>

#include "ucag/tensor.hpp"

namespace ucag {

enum class MapKind { cam, attribution };

inline std::string to_string(MapKind k) { return k == MapKind::cam ? "cam" : "attribution"; }

/// Signed per-pixel relevance for one class, at the resolution of the image
/// it explains. Values are neither normalised nor clipped.
struct SaliencyMap {
  Tensor values;  // [H, W]
  Index class_k = 0;
  Shape2D source_shape;
  MapKind kind = MapKind::cam;

  Shape2D shape() const { return values.spatial(); }
};

/// Flat row-major index of the largest value; ties resolve to the smallest index.
inline Index argmax_index(const Tensor& t) {
  Index best = 0;
  for (Index i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

}  // namespace ucag
