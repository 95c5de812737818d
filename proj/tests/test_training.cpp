#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ucag/dataset.hpp"
#include "ucag/errors.hpp"
#include "ucag/model_io.hpp"
#include "ucag/train.hpp"

using namespace ucag;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ucag_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.per_class = 4;
  s.image = {16, 16};
  s.pattern = 6;
  return s;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  cfg.conv_widths = {4, 4, 4};
  return cfg;
}

}  // namespace

TEST(Synthetic, PlantedPatternContract) {
  SyntheticSpec spec;  // 2 classes x 100, 64x64, 16x16 pattern
  const auto samples = generate_synthetic(spec, 7);
  ASSERT_EQ(samples.size(), 200u);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    EXPECT_EQ(s.label, static_cast<Index>(i % 2));
    ASSERT_TRUE(s.mask && s.bbox);
    EXPECT_EQ(s.mask->count(), 256);
    EXPECT_EQ(*s.mask, mask_from_box({64, 64}, *s.bbox));
    EXPECT_GE(s.image.min(), 0.0);
    EXPECT_LE(s.image.max(), 1.0);
  }
}

TEST(Synthetic, DeterministicInSeed) {
  const auto a = generate_synthetic(small_spec(), 3);
  const auto b = generate_synthetic(small_spec(), 3);
  const auto c = generate_synthetic(small_spec(), 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].bbox, b[i].bbox);
  }
  EXPECT_FALSE(a[0].image == c[0].image);
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(generate_synthetic(s, 0), InvalidArgument);
  s = small_spec();
  s.pattern = 17;
  EXPECT_THROW(generate_synthetic(s, 0), InvalidArgument);
}

TEST(Manifest, WriteLoadRoundTrip) {
  const auto dir = scratch_dir("manifest");
  const auto samples = generate_synthetic(small_spec(), 11);
  const DatasetManifest written = write_dataset(samples, 2, dir);
  const DatasetManifest m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.entries.size(), 8u);
  EXPECT_EQ(m.classes.size(), 2u);
  EXPECT_TRUE(m.has_masks());
  const auto loaded = load_samples(m);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(loaded[i].image, samples[i].image);  // 8-bit quantised at generation
    EXPECT_EQ(loaded[i].label, samples[i].label);
    EXPECT_EQ(*loaded[i].mask, *samples[i].mask);
    EXPECT_EQ(loaded[i].id, samples[i].id);
  }
}

TEST(Manifest, ValidatesLabelsAndFiles) {
  const auto dir = scratch_dir("manifest_bad");
  DatasetManifest m = write_dataset(generate_synthetic(small_spec(), 1), 2, dir);
  m.entries[0].label = 2;
  save_manifest(m, dir / "bad_label.json");
  EXPECT_THROW(load_manifest(dir / "bad_label.json"), InvalidArgument);

  m.entries[0].label = 0;
  std::filesystem::remove(dir / m.entries[1].image);
  save_manifest(m, dir / "missing.json");
  EXPECT_THROW(load_manifest(dir / "missing.json"), IoError);

  std::ofstream(dir / "broken.json") << "{\"classes\": [";
  EXPECT_THROW(load_manifest(dir / "broken.json"), InvalidArgument);
  EXPECT_THROW(load_manifest(dir / "nope.json"), IoError);
}

TEST(Train, RejectsZeroEpochs) {
  TrainConfig cfg = quick_config();
  cfg.epochs = 0;
  EXPECT_THROW(train_toy(generate_synthetic(small_spec(), 0), 2, cfg), InvalidArgument);
}

TEST(Train, SameSeedGivesIdenticalWeights) {
  const auto data = generate_synthetic(small_spec(), 2);
  const TrainResult a = train_toy(data, 2, quick_config());
  const TrainResult b = train_toy(data, 2, quick_config());
  EXPECT_EQ(encode_weights(a.network), encode_weights(b.network));
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  TrainConfig other = quick_config();
  other.seed = 6;
  EXPECT_NE(encode_weights(train_toy(data, 2, other).network), encode_weights(a.network));
}

TEST(Train, BiasesStayZeroByDefault) {
  const TrainResult r = train_toy(generate_synthetic(small_spec(), 2), 2, quick_config());
  for (const Layer& l : r.network.layers()) {
    if (const auto* c = std::get_if<Conv2D>(&l)) EXPECT_EQ(c->bias.values().cwiseAbs().maxCoeff(), 0.0);
    if (const auto* d = std::get_if<Dense>(&l)) EXPECT_EQ(d->bias.values().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Train, PlantedPatternReachesHighAccuracy) {
  const auto data = generate_synthetic(SyntheticSpec{}, 7);
  TrainConfig cfg;
  cfg.seed = 1;
  const TrainResult r = train_toy(data, 2, cfg);
  EXPECT_GE(r.train_accuracy, 0.95);
  EXPECT_EQ(r.epoch_loss.size(), 10u);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Weights, RoundTripIsBitExact) {
  const auto dir = scratch_dir("weights");
  std::filesystem::create_directories(dir);
  Network net = make_toy_network(3, 3, {16, 16}, 9, {4, 5, 6});
  net.set_metadata({9, "abc"});
  save_weights(net, dir / "net.bin");
  const Network back = load_weights(dir / "net.bin");
  EXPECT_EQ(encode_weights(back), encode_weights(net));
  EXPECT_EQ(back.metadata().config_digest, "abc");
  EXPECT_EQ(back.num_classes(), 3);
  const Tensor x({1, 3, 16, 16}, 0.3);
  EXPECT_EQ(predict_logits(back, x), predict_logits(net, x));
}

TEST(Weights, DamagedFilesAreRejected) {
  const std::string bytes = encode_weights(make_toy_network(3, 2, {16, 16}, 1, {2, 2, 2}));
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() - 9, bytes.size() - 1})
    EXPECT_THROW(decode_weights(std::string_view(bytes).substr(0, cut)), CorruptModel) << cut;
  EXPECT_THROW(decode_weights(bytes + "x"), CorruptModel);

  std::string flipped = bytes;
  flipped[flipped.size() - 12] ^= 0x01;
  EXPECT_THROW(decode_weights(flipped), CorruptModel);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_weights(bad_magic), CorruptModel);
}

TEST(Weights, OtherVersionsAreUnsupported) {
  const std::string bytes = encode_weights(make_toy_network(3, 2, {16, 16}, 1, {2, 2, 2}));
  const std::size_t prefix = kWeightMagic.size() + 4;
  std::string header = bytes.substr(prefix, static_cast<std::uint8_t>(bytes[8]) |
                                                (static_cast<std::size_t>(static_cast<std::uint8_t>(bytes[9])) << 8));
  const auto pos = header.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  header[pos + 10] = '2';
  const std::string patched = bytes.substr(0, prefix) + header + bytes.substr(prefix + header.size());
  EXPECT_THROW(decode_weights(patched), UnsupportedVersion);
  EXPECT_THROW(load_weights("/nonexistent/net.bin"), IoError);
}
