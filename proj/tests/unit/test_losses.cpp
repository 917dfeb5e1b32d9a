#include <gtest/gtest.h>

#include <cmath>

#include "loss_checks.hpp"

using namespace fexgan;
using namespace fexgan::testing;

TEST(LossValues, BinaryCrossEntropyOfHalfIsLn2) {
  EXPECT_NEAR(binary_ce(1.0, 0.5), std::log(2.0), 1e-12);
  EXPECT_NEAR(binary_ce(0.0, 0.5), std::log(2.0), 1e-12);
}

TEST(LossValues, UniformSevenWayIsLn7) {
  const std::array<double, kAffectCount> p{1. / 7, 1. / 7, 1. / 7, 1. / 7, 1. / 7, 1. / 7, 1. / 7};
  for (int c = 0; c < 7; ++c) EXPECT_NEAR(multiclass_ce<double>(one_hot(c), p), std::log(7.0), 1e-12);
}

TEST(LossValues, KlOfUnitMeanIsHalf) {
  const std::vector<double> mu{1.0}, lv{0.0};
  EXPECT_NEAR(kl_loss<double>(mu, lv), 0.5, 1e-12);
}

TEST(LossValues, ReconstructionOfOppositeImagesIsTwo) {
  Tensor<double> a({4, 4, 3}, 1.0), b({4, 4, 3}, -1.0);
  EXPECT_NEAR(reconstruction_loss(a, b), 2.0, 1e-12);
  EXPECT_EQ(reconstruction_loss(a, a), 0.0);
}

TEST(LossValues, ClampKeepsLossesFinite) {
  EXPECT_TRUE(std::isfinite(binary_ce(1.0, 0.0)));
  EXPECT_TRUE(std::isfinite(binary_ce(0.0, 1.0)));
  EXPECT_NEAR(binary_ce(1.0, 0.0), -std::log(kProbEpsilon), 1e-6);
  const std::array<double, kAffectCount> p{1, 0, 0, 0, 0, 0, 0};
  EXPECT_TRUE(std::isfinite(multiclass_ce<double>(one_hot(3), p)));
  EXPECT_EQ(binary_ce_grad(1.0, 0.0), 0.0);
}

TEST(LossValues, AdversarialTermsShareOneHelper) {
  const auto o = output_from_logits(0.3, {0.1, -0.2, 0.5, 0, 0, 0.2, -1});
  const auto a = one_hot(2);
  EXPECT_DOUBLE_EQ(generator_gan_loss(o, a), discriminator_real_loss(o, a));
  EXPECT_DOUBLE_EQ(discriminator_fake_loss(o, a),
                   binary_ce(0.0, o.realness) + multiclass_ce<double>(a, o.class_probs));
}

TEST(LossValues, BatchLossIsMeanOfTerms) {
  Rng rng(1);
  Tensor<double> rl({3, 1}), cl({3, kAffectCount});
  for (auto& v : rl.values()) v = rng.normal();
  for (auto& v : cl.values()) v = rng.normal();
  DiscriminatorBatch<double> b{rl, rl, cl, softmax_rows(cl)};
  for (auto& v : b.realness.values()) v = sigmoid(v);
  const std::vector<AffectVector> aff{one_hot(0), one_hot(3), one_hot(6)};
  double manual = 0;
  for (std::size_t i = 0; i < 3; ++i) manual += adversarial_term(1.0, b.at(i), aff[i]);
  EXPECT_NEAR(adversarial_batch_loss(1.0, b, std::span<const AffectVector>(aff)).value, manual / 3, 1e-12);
}

TEST(LossValues, KlBatchIsMeanOfRows) {
  Tensor<double> mu({2, 2}), lv({2, 2});
  mu[0] = 1;  // row 0: kl 0.5
  lv[3] = 1;  // row 1: -0.5 (1 + 1 - e) = (e - 2) / 2
  const auto k = kl_batch_loss(mu, lv);
  EXPECT_NEAR(k.value, (0.5 + (std::exp(1.0) - 2) / 2) / 2, 1e-12);
}

TEST(LossGradients, MatchCentralDifferences) {
  for (const auto& [name, err] : all_loss_gradient_errors()) EXPECT_LT(err, 1e-4) << name;
}

TEST(KlProperty, NonNegativeAndZeroOnlyAtStandardNormal) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t d = 1 + rng.index(8);
    std::vector<double> mu(d), lv(d);
    for (auto& v : mu) v = rng.uniform(-5, 5);
    for (auto& v : lv) v = rng.uniform(-5, 5);
    ASSERT_GT(kl_loss<double>(mu, lv), 1e-9);
  }
  const std::vector<double> z(5, 0.0);
  EXPECT_NEAR(kl_loss<double>(z, z), 0.0, 1e-12);
}

TEST(Schedule, AlphaDropsExactlyAtScheduleEpoch) {
  LossWeights w;
  EXPECT_EQ(apply_weight_schedule(w, 0), 1.0);
  EXPECT_EQ(apply_weight_schedule(w, 49), 1.0);
  EXPECT_EQ(apply_weight_schedule(w, 50), 0.3);
  EXPECT_EQ(apply_weight_schedule(w, 99), 0.3);
  w.alpha_after_schedule = 0.5;
  const auto before = generator_total_loss(2.0, 0.0, 0.0, w, 49);
  const auto after = generator_total_loss(2.0, 0.0, 0.0, w, 50);
  EXPECT_DOUBLE_EQ(after.total, before.total / 2);
}

TEST(Schedule, DefaultTotalIsWeightedSum) {
  const auto b = generator_total_loss(1.5, 20.0, 0.25, LossWeights{}, 0);
  EXPECT_NEAR(b.total, 1.5 + 0.003 * 20 + 10 * 0.25, 1e-12);
  EXPECT_EQ(discriminator_total_loss(0.7, 0.9).total, 1.6);
}

TEST(LossWeightsValidation, RejectsNegativeWeights) {
  LossWeights w;
  w.beta = -1;
  EXPECT_THROW(w.validate(), ConfigError);
}
