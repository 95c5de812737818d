#include "ucag/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "ucag/errors.hpp"

namespace ucag {
namespace {

using nlohmann::json;

template <typename T>
void put_le(std::string& out, T value) {
  std::array<char, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.append(raw.data(), raw.size());
}

template <typename T>
T get_le(std::string_view bytes, std::size_t pos) {
  std::array<char, sizeof(T)> raw{};
  std::memcpy(raw.data(), bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

// Parameter tensors in file order.
std::vector<Tensor*> parameters(std::vector<Layer>& layers) {
  std::vector<Tensor*> out;
  for (Layer& l : layers) {
    if (auto* c = std::get_if<Conv2D>(&l)) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    } else if (auto* d = std::get_if<Dense>(&l)) {
      out.push_back(&d->weight);
      out.push_back(&d->bias);
    }
  }
  return out;
}

Layer layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    const auto in = j.at("in_channels").get<Index>(), out = j.at("out_channels").get<Index>();
    if (j.at("kernel").get<Index>() != Conv2D::kKernel) throw CorruptModel("unsupported conv kernel size");
    if (in < 1 || out < 1) throw CorruptModel("conv2d channel counts must be positive");
    return Conv2D{Tensor({out, in, 3, 3}), Tensor({out})};
  }
  if (type == "relu") return ReLU{};
  if (type == "maxpool2") return MaxPool2{};
  if (type == "global_avg_pool") return GlobalAvgPool{};
  if (type == "dense") {
    const auto in = j.at("in_features").get<Index>(), out = j.at("out_features").get<Index>();
    if (in < 1 || out < 1) throw CorruptModel("dense feature counts must be positive");
    return Dense{Tensor({out, in}), Tensor({out})};
  }
  throw CorruptModel("unknown layer type '" + type + "'");
}

}  // namespace

json model_header(const Network& net) {
  json layers = json::array();
  for (const Layer& l : net.layers()) {
    json j{{"type", layer_name(l)}};
    if (const auto* c = std::get_if<Conv2D>(&l)) {
      j["in_channels"] = c->in_channels();
      j["out_channels"] = c->out_channels();
      j["kernel"] = Conv2D::kKernel;
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      j["in_features"] = d->in_features();
      j["out_features"] = d->out_features();
    }
    layers.push_back(std::move(j));
  }
  return {{"version", kWeightFormatVersion},
          {"input_shape", net.input_shape()},
          {"num_classes", net.num_classes()},
          {"seed", net.metadata().seed},
          {"config_digest", net.metadata().config_digest},
          {"layers", layers}};
}

std::string encode_weights(const Network& net) {
  const std::string header = model_header(net).dump();
  std::string floats;
  std::vector<Layer> layers = net.layers();
  for (const Tensor* t : parameters(layers))
    for (Index i = 0; i < t->size(); ++i) put_le<double>(floats, (*t)[i]);

  std::string out(kWeightMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  out += floats;
  put_le<std::uint32_t>(out, crc32_of(floats));
  return out;
}

Network decode_weights(std::string_view bytes) {
  const std::size_t prefix = kWeightMagic.size() + sizeof(std::uint32_t);
  if (bytes.size() < prefix) throw CorruptModel("weight file truncated before header");
  if (bytes.substr(0, kWeightMagic.size()) != kWeightMagic) throw CorruptModel("bad weight file magic");
  const auto header_len = get_le<std::uint32_t>(bytes, kWeightMagic.size());
  if (bytes.size() - prefix < header_len) throw CorruptModel("weight file truncated inside header");

  json header;
  try {
    header = json::parse(bytes.substr(prefix, header_len));
  } catch (const json::exception& e) {
    throw CorruptModel(std::string("unreadable weight header: ") + e.what());
  }
  if (!header.contains("version") || !header["version"].is_number_integer())
    throw CorruptModel("weight header lacks a version");
  if (header["version"].get<int>() != kWeightFormatVersion)
    throw UnsupportedVersion("weight format version " + header["version"].dump() + " is not supported");

  std::vector<Layer> layers;
  std::array<Index, 3> input_shape{};
  NetworkMetadata meta;
  try {
    for (const json& j : header.at("layers")) layers.push_back(layer_from_json(j));
    input_shape = header.at("input_shape").get<std::array<Index, 3>>();
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.config_digest = header.at("config_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptModel(std::string("malformed weight header: ") + e.what());
  }

  std::size_t pos = prefix + header_len;
  const std::size_t float_start = pos;
  for (Tensor* t : parameters(layers)) {
    const std::size_t need = static_cast<std::size_t>(t->size()) * sizeof(double);
    if (bytes.size() - pos < need) throw CorruptModel("weight file truncated inside parameters");
    for (Index i = 0; i < t->size(); ++i, pos += sizeof(double)) (*t)[i] = get_le<double>(bytes, pos);
  }
  if (bytes.size() - pos != sizeof(std::uint32_t))
    throw CorruptModel(bytes.size() - pos < sizeof(std::uint32_t) ? "weight file truncated before checksum"
                                                                    : "trailing bytes after checksum");
  if (get_le<std::uint32_t>(bytes, pos) != crc32_of(bytes.substr(float_start, pos - float_start)))
    throw CorruptModel("weight checksum mismatch");

  try {
    Network net(std::move(layers), input_shape, std::move(meta));
    if (header.value("num_classes", Index{-1}) != net.num_classes()) throw CorruptModel("class count mismatch");
    return net;
  } catch (const InvalidArgument& e) {
    throw CorruptModel(std::string("inconsistent layer chain: ") + e.what());
  }
}

void save_weights(const Network& net, const std::filesystem::path& path) {
  const std::string bytes = encode_weights(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Network load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_weights(buf.str());
}

}  // namespace ucag
