#include "ucag/dataio.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ucag/errors.hpp"

namespace ucag {
namespace {

// Reads one whitespace/comment-delimited header token starting at `pos`.
std::string next_token(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const auto ch = static_cast<unsigned char>(bytes[pos]);
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(ch)) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') ++pos;
  if (start == pos) throw FormatError("ppm: truncated header");
  return std::string(bytes.substr(start, pos - start));
}

Index parse_positive(const std::string& token, const char* what) {
  Index value = 0;
  for (char ch : token) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) throw FormatError(std::string("ppm: bad ") + what + " '" + token + "'");
    value = value * 10 + (ch - '0');
    if (value > (Index{1} << 24)) throw FormatError(std::string("ppm: ") + what + " too large");
  }
  if (value <= 0) throw FormatError(std::string("ppm: ") + what + " must be positive");
  return value;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Index BinaryMask::count() const {
  Index n = 0;
  for (auto b : bits) n += b;
  return n;
}

BinaryMask mask_from_box(Shape2D shape, const BoundingBox& box) {
  require(box.h >= 1 && box.w >= 1 && box.row >= 0 && box.col >= 0 && box.row + box.h <= shape.h &&
              box.col + box.w <= shape.w,
          "bounding box lies outside the image");
  BinaryMask m(shape);
  for (Index y = box.row; y < box.row + box.h; ++y)
    for (Index x = box.col; x < box.col + box.w; ++x) m.set(y, x, true);
  return m;
}

Tensor mask_to_tensor(const BinaryMask& mask) {
  Tensor t({mask.shape.h, mask.shape.w});
  for (Index i = 0; i < t.size(); ++i) t[i] = mask.bits[static_cast<std::size_t>(i)];
  return t;
}

RgbImage decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic == "P3" || magic == "P1" || magic == "P2" || magic == "P4" || magic == "P5")
    throw UnsupportedFormat("ppm: only binary P6 is supported, got " + magic);
  if (magic != "P6") throw FormatError("ppm: bad magic");
  const Index w = parse_positive(next_token(bytes, pos), "width");
  const Index h = parse_positive(next_token(bytes, pos), "height");
  const Index maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw UnsupportedFormat("ppm: maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("ppm: missing separator before pixel data");
  ++pos;
  RgbImage img({h, w});
  if (bytes.size() - pos < img.pixels.size()) throw FormatError("ppm: truncated pixel data");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(), img.pixels.begin());
  return img;
}

std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.shape.w) + " " + std::to_string(img.shape.h) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_ppm(buf.str());
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_ppm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor to_tensor(const RgbImage& img) {
  Tensor t({3, img.shape.h, img.shape.w});
  for (Index y = 0; y < img.shape.h; ++y)
    for (Index x = 0; x < img.shape.w; ++x)
      for (Index c = 0; c < 3; ++c) t(c, y, x) = img.at(y, x, c) / 255.0;
  return t;
}

RgbImage to_rgb(const Tensor& t) {
  require(t.rank() == 3 && (t.dim(0) == 3 || t.dim(0) == 1), "to_rgb expects [3,H,W] or [1,H,W]");
  RgbImage img(t.spatial());
  for (Index y = 0; y < img.shape.h; ++y)
    for (Index x = 0; x < img.shape.w; ++x)
      for (Index c = 0; c < 3; ++c) img.at(y, x, c) = quantize(t(t.dim(0) == 3 ? c : 0, y, x));
  return img;
}

BinaryMask mask_from_rgb(const RgbImage& img) {
  BinaryMask m(img.shape);
  for (Index y = 0; y < img.shape.h; ++y)
    for (Index x = 0; x < img.shape.w; ++x) {
      const double lum = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      m.set(y, x, lum > 127.0);
    }
  return m;
}

BinaryMask load_mask(const std::filesystem::path& path) { return mask_from_rgb(read_ppm(path)); }

RgbImage mask_to_rgb(const BinaryMask& mask) {
  RgbImage img(mask.shape);
  for (Index y = 0; y < mask.shape.h; ++y)
    for (Index x = 0; x < mask.shape.w; ++x)
      for (Index c = 0; c < 3; ++c) img.at(y, x, c) = mask.at(y, x) ? 255 : 0;
  return img;
}

std::array<double, 3> diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  if (v >= 0) return {1.0, 1.0 - v, 1.0 - v};
  return {1.0 + v, 1.0 + v, 1.0};
}

RgbImage render_heatmap(const SaliencyMap& map, HeatmapMode mode, const RgbImage* base) {
  const Shape2D s = map.shape();
  if (mode == HeatmapMode::overlay) {
    require(base != nullptr, "overlay rendering needs a base image");
    require(base->shape == s, "overlay base image size does not match the map");
  }
  const double scale = map.values.values().cwiseAbs().maxCoeff();
  RgbImage out(s);
  for (Index y = 0; y < s.h; ++y)
    for (Index x = 0; x < s.w; ++x) {
      const double v = scale > 0 ? map.values(y, x) / scale : 0.0;
      const auto rgb = diverging_color(v);
      for (Index c = 0; c < 3; ++c) {
        double value = rgb[static_cast<std::size_t>(c)] * 255.0;
        if (mode == HeatmapMode::overlay) value = 0.5 * value + 0.5 * base->at(y, x, c);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(value));
      }
    }
  return out;
}

}  // namespace ucag
