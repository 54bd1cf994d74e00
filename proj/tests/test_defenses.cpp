#include <cmath>

#include <gtest/gtest.h>

#include "rfadv/defenses/adversarial.hpp"
#include "rfadv/defenses/smoothing.hpp"
#include "rfadv/nn/serialize.hpp"
#include "support/fixtures.hpp"

using namespace rfadv;
using namespace rfadv::defenses;

TEST(Smoothing, AugmentedSetHasKPlusOneCopies) {
  const auto& fx = testkit::trained_fixture();
  SmoothingConfig cfg;
  cfg.k = 3;
  cfg.sigma = 0.05;
  const auto aug = smooth_augment(fx.train, cfg);
  ASSERT_EQ(aug.size(), 4 * fx.train.size());
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < fx.train.size(); ++i) {
    const auto orig = fx.train.frame(i);
    EXPECT_TRUE(std::equal(orig.begin(), orig.end(), aug.frame(i).begin()));
    for (std::size_t c = 1; c <= 3; ++c) {
      const std::size_t j = c * fx.train.size() + i;
      ASSERT_EQ(aug.label(j), fx.train.label(i));
      const auto noisy = aug.frame(j);
      for (std::size_t t = 0; t < orig.size(); ++t) {
        const double d = noisy[t] - orig[t];
        sum += d;
        sq += d * d;
        ++n;
      }
    }
  }
  EXPECT_NEAR(sum / n, 0.0, 1e-3);
  EXPECT_NEAR(std::sqrt(sq / n), 0.05, 1e-3);
}

TEST(Smoothing, RejectsBadConfigAndMemoryCap) {
  const auto& fx = testkit::trained_fixture();
  SmoothingConfig cfg;
  cfg.max_frames = 10 * fx.train.size();
  EXPECT_THROW(smooth_augment(fx.train, cfg), ConfigError);  // needs 11x
  cfg = {};
  cfg.sigma = 0;
  EXPECT_THROW(smooth_augment(fx.train, cfg), ConfigError);
  cfg = {};
  cfg.k = 0;
  EXPECT_THROW(smooth_augment(fx.train, cfg), ConfigError);
}

TEST(Smoothing, VanishingNoiseKeepsCleanAccuracy) {
  const auto& fx = testkit::trained_fixture();
  SmoothingConfig cfg;
  cfg.k = 1;
  cfg.sigma = 1e-12;
  auto clf_cfg = fx.cfg;
  clf_cfg.epochs = 6;  // the doubled set sees each frame twice per epoch
  const auto res = gaussian_smooth_train(fx.train, cfg, clf_cfg);
  EXPECT_NEAR(classifier::accuracy(res.net, fx.test), fx.clean_accuracy, 0.02 + 1e-12);
  EXPECT_EQ(res.net.metadata().at("defense"), "gaussian_smoothing");
  EXPECT_EQ(res.net.metadata().at("k"), "1");
  // Metadata survives the checkpoint format.
  EXPECT_EQ(nn::deserialize(nn::serialize(res.net)).metadata().at("defense"), "gaussian_smoothing");
}

TEST(Smoothing, CleanAccuracyCheckIsReported) {
  CleanAccuracyCheck ok{0.9, 0.87, 0.05};
  CleanAccuracyCheck bad{0.9, 0.8, 0.05};
  EXPECT_TRUE(ok.within());
  EXPECT_FALSE(bad.within());
  EXPECT_NE(bad.message().find("degraded"), std::string::npos);
}

TEST(Adversarial, TinyMixRatioIsPlainTraining) {
  const auto& fx = testkit::trained_fixture();
  AdvTrainConfig cfg;
  cfg.recipe = Recipe::fgm;
  cfg.mix_ratio = 1e-3;
  cfg.epochs = 2;
  cfg.from_scratch = false;
  channel::ChannelDistribution dist;
  const auto adv = adversarial_train(fx.net, fx.train, cfg, fx.cfg, dist, channel::NoiseSpec{});
  auto plain_cfg = fx.cfg;
  plain_cfg.epochs = 2;
  const auto plain = classifier::train(fx.net, fx.train, plain_cfg);
  EXPECT_TRUE(std::equal(adv.net.params().begin(), adv.net.params().end(), plain.net.params().begin()));
  EXPECT_NEAR(classifier::accuracy(adv.net, fx.test), fx.clean_accuracy, 0.02 + 1e-12);
}

TEST(Adversarial, FgmRecipeRecordsMetadata) {
  const auto& fx = testkit::trained_fixture();
  AdvTrainConfig cfg;
  cfg.recipe = Recipe::fgm;
  cfg.epochs = 1;
  cfg.from_scratch = false;
  channel::ChannelDistribution dist;
  const auto res = adversarial_train(fx.net, fx.train, cfg, fx.cfg, dist, channel::NoiseSpec{});
  const auto& m = res.net.metadata();
  EXPECT_EQ(m.at("defense"), "adversarial_training");
  EXPECT_EQ(m.at("recipe"), "fgm");
  EXPECT_EQ(m.at("mix_ratio"), "0.5");
  EXPECT_EQ(m.at("pnr_schedule"), "-10 0 10");
  EXPECT_EQ(res.history.size(), 1u);
  EXPECT_FALSE(res.last_generator);
  EXPECT_NE(nn::serialize(res.net), nn::serialize(fx.net));
}

TEST(Adversarial, CdiGanRecipeRefreshesIndependentGenerator) {
  const auto& fx = testkit::trained_fixture();
  AdvTrainConfig cfg;
  cfg.epochs = 2;
  cfg.gan_frames = 128;
  cfg.gan.f1_pairs = 32;
  channel::ChannelDistribution dist;
  const auto res = adversarial_train(fx.net, fx.train, cfg, fx.cfg, dist, channel::NoiseSpec{});
  ASSERT_TRUE(res.last_generator);
  EXPECT_EQ(res.gan_telemetry.rows.size(), 2u);
  EXPECT_EQ(res.gan_telemetry.rows[1].epoch, 2u);
  const attacks::GanConfig attacker;
  EXPECT_NE(res.net.metadata().at("defender_g_arch"), attacker.g_arch);
  EXPECT_NE(cfg.gan.seed, attacker.seed);
  Rng init(1);
  EXPECT_NE(res.last_generator->generator->param_count(),
            attacks::detail::build_generator(attacker, 128, init).param_count());
}

TEST(Adversarial, RejectsBadConfig) {
  const auto& fx = testkit::trained_fixture();
  channel::ChannelDistribution dist;
  AdvTrainConfig cfg;
  cfg.mix_ratio = 0.0;
  EXPECT_THROW(adversarial_train(fx.net, fx.train, cfg, fx.cfg, dist, channel::NoiseSpec{}), ConfigError);
  cfg = {};
  cfg.pnr_schedule.clear();
  EXPECT_THROW(adversarial_train(fx.net, fx.train, cfg, fx.cfg, dist, channel::NoiseSpec{}), ConfigError);
  EXPECT_EQ(parse_recipe("pgm"), Recipe::pgm);
  EXPECT_THROW(parse_recipe("smoothing"), ConfigError);
}
