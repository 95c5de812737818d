#include "ucag/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "ucag/errors.hpp"
#include "ucag/random.hpp"

namespace ucag {
namespace {

using nlohmann::json;

constexpr double kStripePeriod = 4.0;
constexpr double kStripeAmplitude = 0.4;

double quantize8(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::string sample_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

json box_to_json(const BoundingBox& b) { return {{"row", b.row}, {"col", b.col}, {"h", b.h}, {"w", b.w}}; }

BoundingBox box_from_json(const json& j) {
  return {j.at("row").get<Index>(), j.at("col").get<Index>(), j.at("h").get<Index>(), j.at("w").get<Index>()};
}

}  // namespace

bool DatasetManifest::has_masks() const {
  if (entries.empty()) return false;
  for (const auto& e : entries)
    if (!e.mask && !e.bbox) return false;
  return true;
}

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  require(spec.num_classes >= 2, "synthetic data needs at least 2 classes");
  require(spec.per_class >= 1, "per-class count must be >= 1");
  require(spec.image.valid(), "image size must be positive");
  require(spec.noise >= 0, "noise level must be non-negative");
  require(spec.pattern >= 1 && spec.pattern <= spec.image.h && spec.pattern <= spec.image.w,
          "pattern of side " + std::to_string(spec.pattern) + " does not fit a " + std::to_string(spec.image.h) +
              "x" + std::to_string(spec.image.w) + " image");

  Rng rng(seed);
  const Index total = spec.num_classes * spec.per_class;
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) {
    Sample s;
    s.id = sample_id(static_cast<std::size_t>(i));
    s.label = i % spec.num_classes;
    s.image = Tensor({3, spec.image.h, spec.image.w});
    for (Index p = 0; p < s.image.size(); ++p) s.image[p] = 0.5 + spec.noise * rng.normal();

    const BoundingBox box{static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.image.h - spec.pattern + 1))),
                          static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.image.w - spec.pattern + 1))),
                          spec.pattern, spec.pattern};
    const double theta = std::numbers::pi * static_cast<double>(s.label) / static_cast<double>(spec.num_classes);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double cy = std::sin(theta), cx = std::cos(theta);
    for (Index y = 0; y < box.h; ++y)
      for (Index x = 0; x < box.w; ++x) {
        const double wave = std::sin(2.0 * std::numbers::pi * (cx * x + cy * y) / kStripePeriod + phase);
        for (Index c = 0; c < 3; ++c)
          s.image(c, box.row + y, box.col + x) = 0.5 + kStripeAmplitude * wave + 0.5 * spec.noise * rng.normal();
      }
    for (Index p = 0; p < s.image.size(); ++p) s.image[p] = quantize8(s.image[p]);
    s.mask = mask_from_box(spec.image, box);
    s.bbox = box;
    samples.push_back(std::move(s));
  }
  return samples;
}

DatasetManifest write_dataset(const std::vector<Sample>& samples, Index num_classes, const std::filesystem::path& dir) {
  require(!samples.empty(), "nothing to write");
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (!ec) std::filesystem::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = dir;
  for (Index k = 0; k < num_classes; ++k) m.classes.push_back("class_" + std::to_string(k));
  const Shape2D shape = samples.front().image.spatial();
  m.image_shape = {3, shape.h, shape.w};
  for (const Sample& s : samples) {
    ManifestEntry e;
    e.image = "images/" + s.id + ".ppm";
    e.label = s.label;
    write_ppm(to_rgb(s.image), dir / e.image);
    if (s.mask) {
      e.mask = "masks/" + s.id + ".ppm";
      write_ppm(mask_to_rgb(*s.mask), dir / *e.mask);
    }
    e.bbox = s.bbox;
    m.entries.push_back(std::move(e));
  }
  save_manifest(m, dir / "manifest.json");
  return m;
}

DatasetManifest gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& dir) {
  return write_dataset(generate_synthetic(spec, seed), spec.num_classes, dir);
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json j{{"image", e.image}, {"label", e.label}};
    if (e.mask) j["mask"] = *e.mask;
    if (e.bbox) j["bbox"] = box_to_json(*e.bbox);
    entries.push_back(std::move(j));
  }
  const json doc{{"classes", manifest.classes}, {"image_shape", manifest.image_shape}, {"entries", entries}};
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + file.string());
}

DatasetManifest load_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  DatasetManifest m;
  m.root = file.parent_path();
  try {
    const json doc = json::parse(in);
    m.classes = doc.at("classes").get<std::vector<std::string>>();
    m.image_shape = doc.at("image_shape").get<std::array<Index, 3>>();
    for (const json& j : doc.at("entries")) {
      ManifestEntry e;
      e.image = j.at("image").get<std::string>();
      e.label = j.at("label").get<Index>();
      if (j.contains("mask")) e.mask = j.at("mask").get<std::string>();
      if (j.contains("bbox")) e.bbox = box_from_json(j.at("bbox"));
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw InvalidArgument("malformed manifest " + file.string() + ": " + e.what());
  }
  const auto k = static_cast<Index>(m.classes.size());
  for (const auto& e : m.entries) {
    require(e.label >= 0 && e.label < k, "manifest label " + std::to_string(e.label) + " outside [0, " +
                                             std::to_string(k) + ")");
    if (!std::filesystem::exists(m.root / e.image)) throw IoError("missing image " + (m.root / e.image).string());
    if (e.mask && !std::filesystem::exists(m.root / *e.mask))
      throw IoError("missing mask " + (m.root / *e.mask).string());
  }
  return m;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  const Shape2D expected{manifest.image_shape[1], manifest.image_shape[2]};
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    Sample s;
    s.id = std::filesystem::path(e.image).stem().string();
    s.image = to_tensor(read_ppm(manifest.root / e.image));
    s.label = e.label;
    require(s.image.spatial() == expected, e.image + " does not match the manifest image shape");
    if (e.mask) {
      s.mask = load_mask(manifest.root / *e.mask);
      require(s.mask->shape == expected, *e.mask + " is not image-sized");
    } else if (e.bbox) {
      s.mask = mask_from_box(expected, *e.bbox);
    }
    s.bbox = e.bbox;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace ucag
