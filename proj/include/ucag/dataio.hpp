#pragma once

// Binary PPM (P6, maxval 255) images and masks, and heatmap rendering.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ucag/saliency.hpp"
#include "ucag/tensor.hpp"

namespace ucag {

struct RgbImage {
  Shape2D shape;
  std::vector<std::uint8_t> pixels;  // h * w * 3, row-major RGB

  RgbImage() = default;
  explicit RgbImage(Shape2D s, std::uint8_t fill = 0)
      : shape(s), pixels(static_cast<std::size_t>(s.area() * 3), fill) {}

  std::uint8_t& at(Index y, Index x, Index c) { return pixels[static_cast<std::size_t>((y * shape.w + x) * 3 + c)]; }
  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<std::size_t>((y * shape.w + x) * 3 + c)];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct BinaryMask {
  Shape2D shape;
  std::vector<std::uint8_t> bits;  // 0 or 1 per pixel, row-major

  BinaryMask() = default;
  explicit BinaryMask(Shape2D s, bool fill = false)
      : shape(s), bits(static_cast<std::size_t>(s.area()), fill ? 1 : 0) {}

  bool at(Index y, Index x) const { return bits[static_cast<std::size_t>(y * shape.w + x)] != 0; }
  void set(Index y, Index x, bool v) { bits[static_cast<std::size_t>(y * shape.w + x)] = v ? 1 : 0; }
  Index count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Axis-aligned box: top-left corner plus extent.
struct BoundingBox {
  Index row = 0;
  Index col = 0;
  Index h = 0;
  Index w = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

BinaryMask mask_from_box(Shape2D shape, const BoundingBox& box);

/// [H, W] tensor of 0/1 values.
Tensor mask_to_tensor(const BinaryMask& mask);

RgbImage decode_ppm(std::string_view bytes);
std::string encode_ppm(const RgbImage& img);

/// Throws IoError when the file cannot be opened, FormatError on malformed content.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

/// [3, H, W] tensor with channel values k / 255.
Tensor to_tensor(const RgbImage& img);

/// Quantises a [3,H,W] (or [1,H,W] grey) tensor in [0, 1] to 8 bits, rounding to nearest.
RgbImage to_rgb(const Tensor& t);

/// Foreground where luminance 0.299 R + 0.587 G + 0.114 B exceeds 127.
BinaryMask mask_from_rgb(const RgbImage& img);
BinaryMask load_mask(const std::filesystem::path& path);
RgbImage mask_to_rgb(const BinaryMask& mask);

enum class HeatmapMode { solo, overlay };

/// Diverging red/white/blue colour of a value in [-1, 1].
std::array<double, 3> diverging_color(double v);

/// Zero-centred diverging colormap scaled by max |value|; overlay blends
/// 50/50 with `base`, which must match the map size.
RgbImage render_heatmap(const SaliencyMap& map, HeatmapMode mode, const RgbImage* base = nullptr);

}  // namespace ucag
