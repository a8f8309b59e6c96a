#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "actreg/data.hpp"

using namespace actreg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("actreg_data_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

fs::path write_bytes(const std::string& name, const std::vector<unsigned char>& b) {
  const auto p = scratch(name);
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  return p;
}

std::vector<unsigned char> images_2x2x2() {
  std::vector<unsigned char> b;
  put_u32(b, 0x803);
  put_u32(b, 2);
  put_u32(b, 2);
  put_u32(b, 2);
  for (unsigned char v : {0, 51, 102, 255, 10, 20, 30, 40}) b.push_back(v);
  return b;
}

std::vector<unsigned char> labels(std::uint32_t magic, std::vector<unsigned char> ys) {
  std::vector<unsigned char> b;
  put_u32(b, magic);
  put_u32(b, static_cast<std::uint32_t>(ys.size()));
  b.insert(b.end(), ys.begin(), ys.end());
  return b;
}

/// Nearest-centroid accuracy with centroids estimated on the training split.
double nearest_centroid_accuracy(const DatasetHandle& d) {
  const std::size_t dim = d.feature_dim();
  std::vector<double> c(d.classes * dim, 0.0);
  std::vector<double> n(d.classes, 0.0);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto k = static_cast<std::size_t>(d.train.labels[i]);
    n[k] += 1;
    for (std::size_t j = 0; j < dim; ++j) c[k * dim + j] += d.train.features.at(i, j);
  }
  for (std::size_t k = 0; k < d.classes; ++k)
    for (std::size_t j = 0; j < dim; ++j) c[k * dim + j] /= n[k];
  std::size_t hit = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < d.classes; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double e = d.test.features.at(i, j) - c[k * dim + j];
        s += e * e;
      }
      if (s < best_d) best_d = s, best = k;
    }
    hit += static_cast<int>(best) == d.test.labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(d.test.size());
}

}  // namespace

TEST(LoadIdx, HandBuiltFixture) {
  const auto s = load_idx(write_bytes("img", images_2x2x2()), write_bytes("lbl", labels(0x801, {3, 7})));
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.sample_shape, (Shape{1, 2, 2}));
  EXPECT_EQ(s.features.shape(), (Shape{2, 4}));
  EXPECT_EQ(s.features.at(0, 1), 51.0 / 255.0);
  EXPECT_EQ(s.features.at(0, 3), 1.0);
  EXPECT_EQ(s.features.at(1, 2), 30.0 / 255.0);
  EXPECT_EQ(s.labels, (std::vector<int>{3, 7}));
}

TEST(LoadIdx, LimitTakesPrefix) {
  const auto s = load_idx(write_bytes("img", images_2x2x2()), write_bytes("lbl", labels(0x801, {3, 7})), 1);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.labels[0], 3);
}

TEST(LoadIdx, LabelsWithImageMagicRejected) {
  try {
    load_idx(write_bytes("img", images_2x2x2()), write_bytes("lbl", labels(0x803, {3, 7})));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000803"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("byte offset 0"), std::string::npos) << e.what();
  }
}

TEST(LoadIdx, CountMismatch) {
  EXPECT_THROW(load_idx(write_bytes("img", images_2x2x2()), write_bytes("lbl", labels(0x801, {1, 2, 3}))),
               ValidationError);
}

TEST(LoadIdx, TruncatedPayloadNamesOffset) {
  auto b = images_2x2x2();
  b.resize(b.size() - 3);
  try {
    load_idx(write_bytes("img", b), write_bytes("lbl", labels(0x801, {3, 7})));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 16"), std::string::npos) << e.what();
  }
}

TEST(LoadIdx, MissingFile) { EXPECT_THROW(load_idx("/nonexistent/a", "/nonexistent/b"), IoError); }

TEST(SynthBlobs, ShapesAndSplit) {
  const auto d = synth_blobs({3, 5, 100, 4.0, 1});
  EXPECT_EQ(d.classes, 3u);
  EXPECT_EQ(d.train.size(), 240u);
  EXPECT_EQ(d.test.size(), 60u);
  EXPECT_EQ(d.feature_dim(), 5u);
  EXPECT_NO_THROW(validate_split(d.train, 3, "train"));
  EXPECT_NO_THROW(validate_split(d.test, 3, "test"));
}

TEST(SynthBlobs, SeparatedBlobsAreLinearlySeparable) {
  EXPECT_GE(nearest_centroid_accuracy(synth_blobs({4, 2, 500, 10.0, 3})), 0.99);
}

TEST(SynthBlobs, ZeroSeparationIsChance) {
  const double acc = nearest_centroid_accuracy(synth_blobs({4, 8, 500, 0.0, 4}));
  EXPECT_GT(acc, 0.15);
  EXPECT_LT(acc, 0.35);
}

TEST(SynthBlobs, DeterministicPerSeed) {
  const auto a = synth_blobs({4, 6, 50, 3.0, 9}), b = synth_blobs({4, 6, 50, 3.0, 9}), c = synth_blobs({4, 6, 50, 3.0, 10});
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.test.labels, b.test.labels);
  EXPECT_NE(a.train.features, c.train.features);
}

TEST(SynthBlobs, Preconditions) {
  EXPECT_THROW(synth_blobs({1, 2, 10, 1.0, 0}), ValidationError);
  EXPECT_THROW(synth_blobs({2, 2, 10, -1.0, 0}), ValidationError);
  EXPECT_THROW(synth_blobs({2, 2, 2, 1.0, 0}), ValidationError);  // empty test split
}

TEST(SynthBlobsProperty, TrainAndTestDisjoint) {
  const auto d = synth_blobs({3, 4, 40, 2.0, 11});
  // Continuous features make duplicate rows a measure-zero event, so row identity tracks sample identity.
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto r = d.train.features.data().subspan(i * 4, 4);
    rows.insert({r.begin(), r.end()});
  }
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const auto r = d.test.features.data().subspan(i * 4, 4);
    EXPECT_FALSE(rows.count({r.begin(), r.end()}));
  }
}

TEST(HoldoutSplit, SizesAndDeterminism) {
  const auto d = synth_blobs({2, 3, 50, 2.0, 0});
  const auto [fit, hold] = holdout_split(d.train, 0.1, 5);
  EXPECT_EQ(hold.size(), 8u);
  EXPECT_EQ(fit.size() + hold.size(), d.train.size());
  const auto [fit2, hold2] = holdout_split(d.train, 0.1, 5);
  EXPECT_EQ(hold.features, hold2.features);
}

TEST(HoldoutSplit, KeepsOneSampleEachSide) {
  const auto d = synth_blobs({2, 3, 3, 2.0, 0});
  const auto [fit, hold] = holdout_split(d.train, 0.01, 1);
  EXPECT_EQ(hold.size(), 1u);
  EXPECT_EQ(fit.size(), d.train.size() - 1);
}
