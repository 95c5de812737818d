#pragma once

// Weight file layout (all integers little-endian):
//   "UCAGNET1" | u32 header length | header (canonical JSON) |
//   f64 parameters, layer by layer (weight then bias) | u32 CRC-32 of the f64 section

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ucag/network.hpp"

namespace ucag {

inline constexpr std::string_view kWeightMagic = "UCAGNET1";
inline constexpr int kWeightFormatVersion = 1;

/// Layer list, shapes, class count and metadata as written to the file header.
nlohmann::json model_header(const Network& net);

std::string encode_weights(const Network& net);

/// Throws CorruptModel on truncation, trailing bytes, bad magic or checksum
/// mismatch and UnsupportedVersion when the header version is not 1.
Network decode_weights(std::string_view bytes);

void save_weights(const Network& net, const std::filesystem::path& path);
Network load_weights(const std::filesystem::path& path);

}  // namespace ucag
