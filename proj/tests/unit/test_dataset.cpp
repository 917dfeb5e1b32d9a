#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "fexgan/dataset.hpp"
#include "fexgan/toy_corpus.hpp"
#include "temp_dir.hpp"

using namespace fexgan;
using fexgan::testing::TempDir;
namespace fs = std::filesystem;

namespace {

void write_png(const fs::path& p, int size, unsigned char value) {
  fs::create_directories(p.parent_path());
  cv::imwrite(p.string(), cv::Mat(size, size, CV_8UC3, cv::Scalar(value, value, value)));
}

/// identities x 7 cells with `per_cell` images each.
void make_corpus(const fs::path& root, int identities, int per_cell) {
  const auto names = default_affect_names();
  for (int id = 0; id < identities; ++id)
    for (const auto& a : names)
      for (int i = 0; i < per_cell; ++i)
        write_png(root / ("id" + std::to_string(id)) / a / ("img" + std::to_string(i) + ".png"), 8,
                  static_cast<unsigned char>(10 * i));
}

/// Synthetic index of paths only (no files).
CorpusIndex synthetic_index(const std::vector<std::vector<int>>& cell_sizes) {
  std::vector<CorpusEntry> entries;
  std::vector<std::string> ids;
  for (std::size_t id = 0; id < cell_sizes.size(); ++id) {
    ids.push_back("id" + std::to_string(id));
    for (int a = 0; a < 7; ++a)
      for (int i = 0; i < cell_sizes[id][a]; ++i)
        entries.push_back({static_cast<int>(id), a, "f" + std::to_string(id) + "_" + std::to_string(a) + "_" + std::to_string(i)});
  }
  return CorpusIndex(std::move(entries), ids, default_affect_names());
}

}  // namespace

TEST(ScanCorpus, IndexesEveryCell) {
  TempDir dir;
  make_corpus(dir.path(), 6, 3);
  std::ofstream(dir / "id0/joy/readme.txt") << "ignored";
  const auto index = scan_corpus(dir.path());
  EXPECT_EQ(index.size(), 6u * 7u * 3u);
  EXPECT_EQ(index.identity_count(), 6);
  for (const auto& e : index.entries()) EXPECT_EQ(e.path.extension(), ".png");
  EXPECT_EQ(index.cell(2, 4).size(), 3u);
  EXPECT_TRUE(index.holes().empty());
}

TEST(ScanCorpus, EmptyRootFails) {
  TempDir dir;
  try {
    scan_corpus(dir.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no identities found"), std::string::npos);
  }
}

TEST(ScanCorpus, MissingAffectNamesTheHole) {
  TempDir dir;
  make_corpus(dir.path(), 2, 2);
  fs::remove_all(dir / "id1/fear");
  try {
    scan_corpus(dir.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("id1/fear"), std::string::npos) << e.what();
  }
}

TEST(ScanCorpus, UnknownAffectDirectoryFails) {
  TempDir dir;
  make_corpus(dir.path(), 2, 2);
  write_png(dir / "id0/contempt/x.png", 8, 0);
  EXPECT_THROW(scan_corpus(dir.path()), DataError);
  EXPECT_THROW(scan_corpus(dir / "does_not_exist"), DataError);
}

TEST(ScanCorpus, CustomAffectNames) {
  TempDir dir;
  AffectNames names{"a", "b", "c", "d", "e", "f", "g"};
  for (const auto& n : names) write_png(dir / "x" / n / "1.png", 4, 0);
  EXPECT_EQ(scan_corpus(dir.path(), names).size(), 7u);
}

TEST(Preprocess, NormalizationEndpoints) {
  Rng rng(1);
  const auto off = JitterConfig::disabled();
  const auto black = preprocess(cv::Mat(40, 40, CV_8UC3, cv::Scalar(0, 0, 0)), 16, off, rng);
  const auto white = preprocess(cv::Mat(40, 40, CV_8UC3, cv::Scalar(255, 255, 255)), 16, off, rng);
  EXPECT_EQ(black.shape(), (Shape{16, 16, 3}));
  for (float v : black.values()) ASSERT_EQ(v, -1.0f);
  for (float v : white.values()) ASSERT_EQ(v, 1.0f);
}

TEST(Preprocess, GrayscalePromotedAndUpscaled) {
  Rng rng(2);
  const auto out = preprocess(cv::Mat(4, 4, CV_8UC1, cv::Scalar(51)), 8, JitterConfig::disabled(), rng);
  EXPECT_EQ(out.shape(), (Shape{8, 8, 3}));
  for (float v : out.values()) EXPECT_NEAR(v, 51 / 127.5 - 1, 1e-6);
}

TEST(Preprocess, JitteredOutputStaysInRangeAndIsDeterministic) {
  cv::Mat img(50, 50, CV_8UC3);
  cv::randu(img, 0, 256);
  JitterConfig j;
  j.noise_amplitude = 40;
  Rng a(9), b(9);
  const auto x = preprocess(img, 32, j, a);
  const auto y = preprocess(img, 32, j, b);
  EXPECT_TRUE(x == y);
  for (float v : x.values()) {
    ASSERT_GE(v, -1.0f);
    ASSERT_LE(v, 1.0f);
  }
  Rng c(10);
  EXPECT_FALSE(x == preprocess(img, 32, j, c));
}

TEST(Preprocess, NoiseAmplitudeBoundsDeviation) {
  cv::Mat img(16, 16, CV_8UC3, cv::Scalar(128, 128, 128));
  JitterConfig j{true, 1.0, 4.0};
  Rng rng(3);
  const auto out = preprocess(img, 16, j, rng);
  double max_dev = 0;
  for (float v : out.values()) max_dev = std::max(max_dev, std::abs((v + 1) * 127.5 - 128));
  EXPECT_LE(max_dev, 4.0 + 1e-3);
  EXPECT_GT(max_dev, 1.0);
}

TEST(Decode, RejectsGarbage) {
  const std::vector<unsigned char> junk{1, 2, 3, 4, 5};
  EXPECT_THROW(decode_image(std::span<const unsigned char>(junk)), DataError);
  TempDir dir;
  std::ofstream(dir / "bad.png") << "not an image";
  EXPECT_THROW(decode_image(dir / "bad.png"), DataError);
}

TEST(Decode, ReturnsRgbOrder) {
  TempDir dir;
  cv::Mat bgr(2, 2, CV_8UC3, cv::Scalar(255, 0, 0));  // pure blue in BGR
  cv::imwrite((dir / "b.png").string(), bgr);
  const auto rgb = decode_image(dir / "b.png");
  const auto px = rgb.at<cv::Vec3b>(0, 0);
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[2], 255);
}

TEST(Split, PaperScaleCounts) {
  // 6 identities x 7 affects with uneven cells totalling 55,760 images.
  std::vector<std::vector<int>> sizes(6, std::vector<int>(7));
  int total = 0;
  for (int id = 0; id < 6; ++id)
    for (int a = 0; a < 7; ++a) total += sizes[id][a] = 1200 + 37 * ((id * 7 + a) % 5);
  sizes[5][6] += 55760 - total;
  const auto index = synthetic_index(sizes);
  ASSERT_EQ(index.size(), 55760u);
  const auto [train, val] = split(index, 0.2, 42);
  EXPECT_NEAR(static_cast<double>(train.size()), 44600, 100);
  EXPECT_NEAR(static_cast<double>(val.size()), 11100, 100);
  EXPECT_EQ(train.size() + val.size(), index.size());
}

TEST(Split, HalfSplitOfTenPerCell) {
  const auto index = synthetic_index(std::vector<std::vector<int>>(2, std::vector<int>(7, 10)));
  const auto [train, val] = split(index, 0.5, 1);
  for (int id = 0; id < 2; ++id)
    for (int a = 0; a < 7; ++a) {
      EXPECT_EQ(train.cell(id, a).size(), 5u);
      EXPECT_EQ(val.cell(id, a).size(), 5u);
    }
}

TEST(Split, DisjointExhaustiveDeterministic) {
  const auto index = synthetic_index(std::vector<std::vector<int>>(3, std::vector<int>(7, 7)));
  const auto [t1, v1] = split(index, 0.3, 5);
  const auto [t2, v2] = split(index, 0.3, 5);
  EXPECT_EQ(t1.entries(), t2.entries());
  EXPECT_EQ(v1.entries(), v2.entries());
  std::set<std::string> seen;
  for (const auto& e : t1.entries()) seen.insert(e.path.string());
  for (const auto& e : v1.entries()) EXPECT_TRUE(seen.insert(e.path.string()).second);
  EXPECT_EQ(seen.size(), index.size());
  const auto [t3, v3] = split(index, 0.3, 6);
  EXPECT_NE(v1.entries(), v3.entries());
}

TEST(Split, TinyCellsAndBadFractions) {
  const auto two = synthetic_index(std::vector<std::vector<int>>(1, std::vector<int>(7, 2)));
  const auto [t, v] = split(two, 0.01, 1);
  EXPECT_EQ(t.size(), 7u);
  EXPECT_EQ(v.size(), 7u);
  auto sizes = std::vector<std::vector<int>>(1, std::vector<int>(7, 3));
  sizes[0][3] = 1;
  EXPECT_THROW(split(synthetic_index(sizes), 0.2, 1), DataError);
  EXPECT_THROW(split(two, 0.0, 1), ConfigError);
  EXPECT_THROW(split(two, 1.0, 1), ConfigError);
}

TEST(AffectVector, HardLabels) {
  Rng rng(1);
  const auto v = sample_affect_vector(4, 0.0, rng);
  EXPECT_EQ(v, (AffectVector{0, 0, 0, 0, 1, 0, 0}));
  EXPECT_THROW(one_hot(7), Error);
  EXPECT_THROW(one_hot(-1), Error);
  EXPECT_EQ(affect_index(default_affect_names(), "surprise"), 5);
  EXPECT_THROW(affect_index(default_affect_names(), "bored"), ConfigError);
}

TEST(AffectVector, SampledKeepsArgmaxAndIsSeeded) {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const int c = i % 7;
    const auto x = sample_affect_vector(c, 0.05, a);
    EXPECT_EQ(x, sample_affect_vector(c, 0.05, b));
    EXPECT_EQ(argmax(x), c);
    EXPECT_TRUE(is_finite(x));
  }
}

TEST(AffectVector, MeanConvergesToOneHot) {
  Rng rng(6);
  AffectVector mean{};
  for (int i = 0; i < 10000; ++i) {
    const auto x = sample_affect_vector(2, 0.05, rng);
    for (std::size_t k = 0; k < kAffectCount; ++k) mean[k] += x[k] / 10000;
  }
  const auto target = one_hot(2);
  for (std::size_t k = 0; k < kAffectCount; ++k) EXPECT_NEAR(mean[k], target[k], 0.01);
}

TEST(PairTarget, SameIdentityAndDesiredAffect) {
  const auto index = synthetic_index(std::vector<std::vector<int>>(4, std::vector<int>(7, 6)));
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto& src = index[rng.index(index.size())];
    const int desired = static_cast<int>(rng.index(7));
    const auto& tgt = pair_target(src, desired, index, rng);
    ASSERT_EQ(tgt.identity, src.identity);
    ASSERT_EQ(tgt.affect, desired);
  }
}

TEST(PairTarget, UniformOverEligibleFiles) {
  // Chi-square against uniform over 6 eligible files, 5 dof: p > 0.01 <=> stat < 15.09.
  const auto index = synthetic_index(std::vector<std::vector<int>>(2, std::vector<int>(7, 6)));
  Rng rng(8);
  const auto& src = index[0];
  std::map<std::string, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[pair_target(src, 3, index, rng).path.string()];
  ASSERT_EQ(counts.size(), 6u);
  double stat = 0;
  const double expected = draws / 6.0;
  for (const auto& [path, c] : counts) stat += (c - expected) * (c - expected) / expected;
  EXPECT_LT(stat, 15.086);
}

TEST(MakeBatch, ExamplesSatisfyInvariants) {
  TempDir dir;
  ToyCorpusOptions opt;
  opt.per_cell = 4;
  opt.image_size = 24;
  generate_toy_corpus(dir.path(), opt);
  const auto index = scan_corpus(dir.path());
  ImageCache cache;
  BatchOptions bo{32, 16, 0.05, JitterConfig{}};
  Rng rng(9);
  const auto batch = make_batch(index, bo, rng, cache);
  ASSERT_EQ(batch.size(), 32u);
  for (const auto& ex : batch) {
    EXPECT_EQ(ex.source.shape(), (Shape{16, 16, 3}));
    EXPECT_EQ(ex.target.shape(), (Shape{16, 16, 3}));
    EXPECT_EQ(argmax(ex.target_affect), ex.target_label);
    EXPECT_EQ(argmax(ex.source_affect), ex.source_label);
    for (float v : ex.source.values()) ASSERT_LE(std::abs(v), 1.0f);
  }
  bo.batch_size = 1;
  Rng r1(3), r2(3);
  const auto one = make_batch(index, bo, r1, cache);
  const auto again = make_batch(index, bo, r2, cache);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(one[0].source == again[0].source);
  EXPECT_TRUE(one[0].target == again[0].target);
  EXPECT_EQ(one[0].target_affect, again[0].target_affect);
  bo.batch_size = 0;
  EXPECT_THROW(make_batch(index, bo, r1, cache), ConfigError);
}

TEST(ImageCache, ReturnsSamePixels) {
  TempDir dir;
  write_png(dir / "a.png", 5, 77);
  ImageCache tiny(1);  // too small to hold anything
  ImageCache roomy;
  const auto a = tiny.get(dir / "a.png");
  const auto b = roomy.get(dir / "a.png");
  const auto c = roomy.get(dir / "a.png");
  EXPECT_EQ(cv::norm(a, b, cv::NORM_INF), 0.0);
  EXPECT_EQ(cv::norm(b, c, cv::NORM_INF), 0.0);
}
