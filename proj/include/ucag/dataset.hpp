#pragma once

// Synthetic planted-pattern datasets with exact ground-truth masks, and the
// JSON manifest that indexes them on disk.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ucag/dataio.hpp"
#include "ucag/tensor.hpp"

namespace ucag {

struct SyntheticSpec {
  Index num_classes = 2;
  Index per_class = 100;
  Shape2D image{64, 64};
  double noise = 0.1;
  Index pattern = 16;  // side of the square planted pattern
};

struct Sample {
  std::string id;
  Tensor image;  // [3, H, W], values k / 255
  Index label = 0;
  std::optional<BinaryMask> mask;
  std::optional<BoundingBox> bbox;
};

/// Each image is grey background noise plus one class-specific oriented
/// stripe texture at a uniformly random location. Labels cycle 0..K-1.
/// Pixel values are quantised to 8 bits so files round-trip exactly.
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct ManifestEntry {
  std::string image;  // relative to the manifest directory
  Index label = 0;
  std::optional<std::string> mask;
  std::optional<BoundingBox> bbox;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> classes;
  std::array<Index, 3> image_shape{3, 0, 0};
  std::filesystem::path root;  // directory relative paths resolve against

  bool has_masks() const;
};

/// Writes images/, masks/ and manifest.json under `dir`.
DatasetManifest write_dataset(const std::vector<Sample>& samples, Index num_classes, const std::filesystem::path& dir);

/// Generates and writes a dataset; returns the manifest.
DatasetManifest gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

/// Parses and validates a manifest: labels in range, referenced files present.
DatasetManifest load_manifest(const std::filesystem::path& file);

/// Reads every image (and mask, when listed) referenced by the manifest.
std::vector<Sample> load_samples(const DatasetManifest& manifest);

}  // namespace ucag
