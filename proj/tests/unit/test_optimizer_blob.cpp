#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fexgan/blob.hpp"
#include "fexgan/optimizer.hpp"
#include "temp_dir.hpp"

using namespace fexgan;
using fexgan::testing::TempDir;

TEST(Adam, FirstStepMovesByLearningRate) {
  // After one step with bias correction, |delta| = lr * |g| / (|g| + eps) ~= lr.
  Param<double> p("p", {3});
  p.value[0] = 1;
  p.value[1] = -2;
  p.value[2] = 0.5;
  p.grad[0] = 0.3;
  p.grad[1] = -4;
  p.grad[2] = 1e-3;
  Adam<double> opt({&p}, AdamConfig{});
  opt.step();
  EXPECT_NEAR(p.value[0], 1 - 2e-4, 1e-9);
  EXPECT_NEAR(p.value[1], -2 + 2e-4, 1e-9);
  EXPECT_NEAR(p.value[2], 0.5 - 2e-4, 1e-8);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MatchesReferenceRecursion) {
  Param<double> p("p", {1});
  p.value[0] = 0.0;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  Adam<double> opt({&p}, cfg);
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 20; ++t) {
    const double g = std::sin(t) + 0.1 * x;
    p.grad[0] = g;
    opt.step();
    m = 0.5 * m + 0.5 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.5, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    ASSERT_NEAR(p.value[0], x, 1e-12) << "step " << t;
  }
}

TEST(Adam, MinimizesQuadratic) {
  Param<double> p("p", {2});
  p.value[0] = 3;
  p.value[1] = -2;
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.beta1 = 0.9;
  Adam<double> opt({&p}, cfg);
  for (int i = 0; i < 2000; ++i) {
    p.grad[0] = 2 * p.value[0];
    p.grad[1] = 2 * p.value[1];
    opt.step();
  }
  EXPECT_NEAR(p.value[0], 0, 1e-2);
  EXPECT_NEAR(p.value[1], 0, 1e-2);
}

TEST(AdamConfigValidation, RejectsBadValues) {
  AdamConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Blob, RoundTripIsBitExact) {
  TempDir dir;
  Tensor<float> a({2, 3}), b({4});
  Rng rng(1);
  for (auto& v : a.values()) v = static_cast<float>(rng.normal());
  for (auto& v : b.values()) v = static_cast<float>(rng.normal());
  b[0] = -0.0f;
  write_blob<float>(dir / "x.bin", {{"a", &a}, {"b", &b}});
  Tensor<float> a2({2, 3}), b2({4});
  read_blob_into<float>(dir / "x.bin", {{"b", &b2}, {"a", &a2}});
  EXPECT_EQ(std::memcmp(a.data(), a2.data(), a.size() * 4), 0);
  EXPECT_EQ(std::memcmp(b.data(), b2.data(), b.size() * 4), 0);
}

TEST(Blob, LayoutMatchesDocumentation) {
  TempDir dir;
  Tensor<double> t({2}, 1.5);
  write_blob<double>(dir / "x.bin", {{"w", &t}});
  std::ifstream is(dir / "x.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), {});
  // magic(4) version(4) count(4) name_len(4) name(1) dtype(1) rank(4) dim(8) values(16)
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 1 + 1 + 4 + 8 + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FXGB");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 1);
  EXPECT_EQ(bytes[16], 'w');
  EXPECT_EQ(bytes[17], 2);  // float64
  EXPECT_EQ(bytes[18], 1);  // rank
  EXPECT_EQ(bytes[22], 2);  // dim
  double first;
  std::memcpy(&first, bytes.data() + 30, 8);
  EXPECT_EQ(first, 1.5);
}

TEST(Blob, StrictLoading) {
  TempDir dir;
  Tensor<float> a({2}), c({3});
  write_blob<float>(dir / "x.bin", {{"a", &a}});
  Tensor<float> wrong({3});
  EXPECT_THROW(read_blob_into<float>(dir / "x.bin", {{"a", &wrong}}), DataError);
  EXPECT_THROW(read_blob_into<float>(dir / "x.bin", {{"missing", &a}}), DataError);
  Tensor<double> d({2});
  EXPECT_THROW(read_blob_into<double>(dir / "x.bin", {{"a", &d}}), DataError);
  write_blob<float>(dir / "y.bin", {{"a", &a}, {"c", &c}});
  EXPECT_THROW(read_blob_into<float>(dir / "y.bin", {{"a", &a}}), DataError);
  std::ofstream(dir / "z.bin") << "nope";
  EXPECT_THROW(read_blob(dir / "z.bin"), DataError);
}

TEST(Blob, TruncatedFileFails) {
  TempDir dir;
  Tensor<float> a({100});
  write_blob<float>(dir / "x.bin", {{"a", &a}});
  std::filesystem::resize_file(dir / "x.bin", 60);
  EXPECT_THROW(read_blob(dir / "x.bin"), DataError);
}
