#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/classifier/evaluate.hpp"
#include "rfadv/classifier/model.hpp"
#include "rfadv/nn/serialize.hpp"
#include "rfadv/signal/synth.hpp"
#include "support/fixtures.hpp"

using namespace rfadv;
using namespace rfadv::classifier;

namespace {

// Parameter count from the layer shapes: conv weights f*c*kr*kc + f biases,
// dense weights in*out + out biases; the second conv collapses the I/Q rows.
std::size_t vtcnn2_param_oracle(std::size_t f1, std::size_t f2, std::size_t hidden, std::size_t p, std::size_t classes) {
  const std::size_t conv1 = f1 * 1 * 1 * 3 + f1;
  const std::size_t conv2 = f2 * f1 * 2 * 3 + f2;
  const std::size_t flat = f2 * 1 * p;
  const std::size_t dense1 = flat * hidden + hidden;
  const std::size_t dense2 = hidden * classes + classes;
  return conv1 + conv2 + dense1 + dense2;
}

}  // namespace

TEST(Build, SmallVariantOnZeroFrameIsADistribution) {
  ClassifierConfig cfg;
  const auto net = build(cfg, 128, 4);
  const auto out = net.forward(nn::Tensor<float>({1, 1, 2, 128}));
  ASSERT_EQ(out.shape(), (nn::Shape{1, 4}));
  double sum = 0;
  for (float v : out.values()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Build, ParameterCountsMatchLayerArithmetic) {
  ClassifierConfig cfg;
  EXPECT_EQ(build(cfg, 128, 4).param_count(), vtcnn2_param_oracle(32, 16, 64, 128, 4));
  EXPECT_EQ(build(cfg, 128, 4).param_count(), 134612u);
  cfg.architecture = Architecture::vtcnn2;
  const auto full = build(cfg, 128, 11);
  EXPECT_EQ(full.param_count(), vtcnn2_param_oracle(256, 80, 256, 128, 11));
  EXPECT_EQ(full.output_shape(), nn::Shape{11});
}

TEST(Build, RejectsBadConfigs) {
  ClassifierConfig cfg;
  EXPECT_THROW(build(cfg, 4, 4), ConfigError);
  cfg.dropout = 1.0;
  EXPECT_THROW(build(cfg, 128, 4), ConfigError);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(build(cfg, 128, 4), ConfigError);
  EXPECT_THROW(parse_architecture("resnet"), ConfigError);
}

TEST(Train, MemorizesTwentyFrames) {
  const auto ds = signal::synthesize(testkit::small_spec(5, 2));
  ClassifierConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 20;
  cfg.dropout = 0.0;
  const auto res = train(build(cfg, 128, 4), ds, cfg);
  EXPECT_EQ(accuracy(res.net, ds), 1.0);
}

TEST(Train, LossFallsForMostSeeds) {
  const auto ds = signal::synthesize(testkit::small_spec(40, 3));
  int falling = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ClassifierConfig cfg;
    cfg.epochs = 5;
    cfg.seed = seed;
    const auto res = train(build(cfg, 128, 4), ds, cfg);
    falling += res.history.back().train_loss < res.history.front().train_loss;
  }
  EXPECT_GE(falling, 3);
}

TEST(Train, KeepsBestValidationCheckpoint) {
  const auto [tr, te] = split(signal::synthesize(testkit::small_spec(30, 5)), 0.5, 5);
  ClassifierConfig cfg;
  cfg.epochs = 6;
  const auto res = train(build(cfg, 128, 4), tr, cfg, &te);
  ASSERT_EQ(res.history.size(), 6u);
  double best = 0;
  for (const auto& h : res.history) best = std::max(best, h.test_acc);
  EXPECT_EQ(accuracy(res.net, te), best);
  EXPECT_EQ(res.history[res.best_epoch - 1].test_acc, best);
}

TEST(Train, IsDeterministic) {
  const auto ds = signal::synthesize(testkit::small_spec(10, 6));
  ClassifierConfig cfg;
  cfg.epochs = 2;
  EXPECT_EQ(nn::serialize(train(build(cfg, 128, 4), ds, cfg).net), nn::serialize(train(build(cfg, 128, 4), ds, cfg).net));
}

TEST(Train, HistoryCsv) {
  std::vector<HistoryRow> h{{1, 0.5, 0.25}, {2, 0.25, std::nan("")}};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,test_acc\n1,0.500000,0.250000\n2,0.250000,\n");
}

TEST(Train, RejectsEmptyData) {
  ClassifierConfig cfg;
  LabeledDataset empty(128, {"BPSK", "QPSK"}, 10.0);
  EXPECT_THROW(train(build(cfg, 128, 2), empty, cfg), ConfigError);
  EXPECT_THROW(accuracy(build(cfg, 128, 2), empty), ConfigError);
}

TEST(Evaluate, FixtureIsAccurate) {
  EXPECT_GE(testkit::trained_fixture().clean_accuracy, 0.8);
}

TEST(Evaluate, ZeroPowerAttackEqualsClean) {
  const auto& fx = testkit::trained_fixture();
  attacks::AttackArtifact zero;
  zero.samples = 128;
  zero.p_max = 0.0;
  zero.delta.assign(256, 0.0f);
  channel::ChannelDistribution dist;
  AttackSetting s;
  s.attack = &zero;
  s.channel = &dist;
  EXPECT_EQ(evaluate(fx.net, fx.test, s), fx.clean_accuracy);
}

TEST(Evaluate, HasNoSideEffects) {
  const auto& fx = testkit::trained_fixture();
  auto net = fx.net;
  const auto before = nn::serialize(net);
  attacks::AttackArtifact fgm;
  fgm.kind = attacks::AttackKind::fgm;
  fgm.samples = 128;
  AttackSetting s;
  s.attack = &fgm;
  s.pnr_db = 5.0;
  evaluate(net, fx.test, s);
  evaluate(net, fx.test);
  EXPECT_EQ(nn::serialize(net), before);
}

TEST(Evaluate, CleanAccuracyIgnoresPnr) {
  const auto& fx = testkit::trained_fixture();
  for (double pnr : {-10.0, 0.0, 10.0}) {
    AttackSetting s;
    s.pnr_db = pnr;
    EXPECT_EQ(evaluate(fx.net, fx.test, s), fx.clean_accuracy);
  }
}

TEST(Evaluate, VanishingPnrRecoversCleanAccuracy) {
  const auto& fx = testkit::trained_fixture();
  attacks::AttackArtifact uap;
  uap.samples = 128;
  uap.p_max = 1.0;
  uap.delta.assign(256, 1.0f / 16.0f);
  channel::ChannelDistribution dist;
  AttackSetting s;
  s.attack = &uap;
  s.channel = &dist;
  s.pnr_db = -20.0;
  EXPECT_NEAR(evaluate(fx.net, fx.test, s), fx.clean_accuracy, 0.01);
}

TEST(Evaluate, WhiteBoxFgmHurtsAtHighPnr) {
  const auto& fx = testkit::trained_fixture();
  attacks::AttackArtifact fgm;
  fgm.kind = attacks::AttackKind::fgm;
  fgm.samples = 128;
  AttackSetting s;
  s.attack = &fgm;
  s.pnr_db = 10.0;
  EXPECT_LT(evaluate(fx.net, fx.test, s), fx.clean_accuracy - 0.2);
}

TEST(Evaluate, ChannelAwareAttackNeedsChannel) {
  const auto& fx = testkit::trained_fixture();
  auto inner = std::make_shared<attacks::AttackArtifact>();
  inner->samples = 128;
  inner->p_max = 1.0;
  inner->delta.assign(256, 0.0f);
  attacks::AttackArtifact mrpp;
  mrpp.kind = attacks::AttackKind::mrpp;
  mrpp.samples = 128;
  mrpp.p_max = 1.0;
  mrpp.inner = inner;
  mrpp.compensation.assign(128, 1.0f);
  AttackSetting s;
  s.attack = &mrpp;
  EXPECT_THROW(evaluate(fx.net, fx.test, s), ConfigError);
}

TEST(Evaluate, SameSeedSameAccuracy) {
  const auto& fx = testkit::trained_fixture();
  attacks::AttackArtifact uap;
  uap.samples = 128;
  uap.p_max = 1.0;
  uap.delta.assign(256, 0.0625f);
  channel::ChannelDistribution dist;
  AttackSetting s;
  s.attack = &uap;
  s.channel = &dist;
  s.pnr_db = 10.0;
  s.seed = 17;
  EXPECT_EQ(evaluate(fx.net, fx.test, s), evaluate(fx.net, fx.test, s));
}
