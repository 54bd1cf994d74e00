#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/attacks/fgm.hpp"
#include "rfadv/attacks/gan.hpp"
#include "rfadv/attacks/mrpp.hpp"
#include "rfadv/classifier/evaluate.hpp"
#include "rfadv/nn/serialize.hpp"
#include "support/fixtures.hpp"

using namespace rfadv;
using namespace rfadv::attacks;

namespace {

double energy_of(std::span<const float> v) {
  double e = 0;
  for (float x : v) e += static_cast<double>(x) * x;
  return e;
}

// Two-class linear softmax over a {1, 2, 4} frame with rows w0 = -w1.
Net linear_toy(bool symmetric) {
  Net net({1, 2, 4}, {nn::Flatten{}, nn::Dense{2}, nn::Softmax{}});
  auto p = net.params();
  const float w0[8] = {0.3f, -0.1f, 0.2f, 0.5f, -0.4f, 0.1f, 0.0f, 0.25f};
  for (int i = 0; i < 8; ++i) {
    p[i] = w0[i];
    p[8 + i] = symmetric ? -w0[i] : 0.7f * w0[(i + 3) % 8];
  }
  return net;
}

std::vector<double> ce_per_example(const Net& net, const nn::Tensor<float>& x, std::span<const int> labels) {
  const auto probs = net.forward(x);
  std::vector<double> out(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) out[k] = -std::log(static_cast<double>(probs.row(k)[labels[k]]));
  return out;
}

double pnr10_budget() { return channel::budget_for_pnr(10.0, 0.1, 128, 1.0); }

AttackArtifact uap_of(std::size_t p, double p_max, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test-uap");
  std::normal_distribution<double> n01;
  AttackArtifact a;
  a.samples = p;
  a.p_max = p_max;
  a.delta.resize(2 * p);
  for (auto& v : a.delta) v = static_cast<float>(n01(rng));
  normalize_to_budget(a.delta, p_max);
  return a;
}

GanConfig quick_gan(std::uint64_t seed) {
  GanConfig cfg;
  cfg.epochs = 2;
  cfg.f1_pairs = 64;
  cfg.seed = seed;
  return cfg;
}

const GanResult& quick_cdi_gan() {
  static const GanResult r = [] {
    const auto& fx = testkit::trained_fixture();
    channel::ChannelDistribution dist;
    Rng rng = make_rng(7, "test-gan");
    return train_cdi_gan(fx.net, fx.train, pnr10_budget(), dist, channel::NoiseSpec{}, quick_gan(7), rng);
  }();
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Remap, BelowBudgetIsUnchanged) {
  std::vector<float> v{0.5f, 0.0f, 0.0f, 0.0f};  // energy 0.25 = p_max / 2
  EXPECT_EQ(remap_power(v, 0.5), v);
}

TEST(Remap, AboveBudgetLandsOnTheSphere) {
  std::vector<float> v{1.0f, 1.0f, 1.0f, 1.0f};  // energy 4 = 4 * p_max
  const auto out = remap_power(v, 1.0);
  EXPECT_NEAR(energy_of(out), 1.0, 1e-6);
  EXPECT_LE(energy_of(out), 1.0);
  for (float x : out) EXPECT_NEAR(x, 0.5f, 1e-6);
}

TEST(Remap, ZeroStaysZero) {
  std::vector<float> v(6, 0.0f);
  EXPECT_EQ(remap_power(v, 2.0), v);
  EXPECT_THROW(remap_power(v, -1.0), ConfigError);
}

TEST(Remap, NeverExceedsBudget) {
  Rng rng(11);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> logscale(-6, 6);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<float> v(256);
    const double s = std::pow(10.0, logscale(rng));
    for (auto& x : v) x = static_cast<float>(s * n01(rng));
    const double p_max = std::pow(10.0, logscale(rng));
    const auto out = remap_power(v, p_max);
    ASSERT_LE(energy_of(out), p_max);
  }
}

// ---------------------------------------------------------------------------

TEST(Fgm, HitsBudgetAndScalesWithRootTwo) {
  const auto& fx = testkit::trained_fixture();
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto x = fx.test.tensor(idx);
  const auto labels = fx.test.int_labels(idx);
  const auto a = fgm_no_channel(fx.net, x, labels, 2.0);
  const auto b = fgm_no_channel(fx.net, x, labels, 4.0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    ASSERT_FALSE(a.degenerate[k]);
    EXPECT_NEAR(energy_of(a.delta.row(k)), 2.0, 1e-6);
    EXPECT_LE(energy_of(a.delta.row(k)), 2.0);
    for (std::size_t j = 0; j < 256; ++j) {
      EXPECT_NEAR(b.delta.row(k)[j], std::sqrt(2.0) * a.delta.row(k)[j], 1e-5);
    }
  }
}

TEST(Fgm, LinearToyFollowsWeightDifference) {
  // For softmax(Wx), dCE/dx with true class 0 is p1 (w1 - w0).
  const auto net = linear_toy(false);
  nn::Tensor<float> x({1, 1, 2, 4}, {0.1f, 0.2f, -0.3f, 0.4f, 0.0f, -0.1f, 0.2f, 0.05f});
  const std::vector<int> label{0};
  const auto r = fgm_no_channel(net, x, label, 3.0);
  const auto p = net.params();
  std::vector<double> diff(8);
  double norm = 0;
  for (int i = 0; i < 8; ++i) {
    diff[i] = static_cast<double>(p[8 + i]) - p[i];
    norm += diff[i] * diff[i];
  }
  norm = std::sqrt(norm);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(r.delta.row(0)[i], std::sqrt(3.0) * diff[i] / norm, 1e-5);
}

TEST(Fgm, ZeroGradientIsFlagged) {
  Net net({1, 2, 4}, {nn::Flatten{}, nn::Dense{2}, nn::Softmax{}});  // all weights zero
  nn::Tensor<float> x({2, 1, 2, 4});
  x.row(1)[0] = 1.0f;
  const std::vector<int> labels{0, 1};
  const auto r = fgm_no_channel(net, x, labels, 1.0);
  EXPECT_EQ(r.degenerate_count(), 2u);
  for (float v : r.delta.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(fgm_no_channel(net, x, labels, 0.0), ConfigError);
}

TEST(Fgm, SmallStepIncreasesLoss) {
  const auto& fx = testkit::trained_fixture();
  const auto idx = fx.test.all_indices();
  const auto x = fx.test.tensor(idx);
  const auto labels = fx.test.int_labels(idx);
  const auto r = fgm_no_channel(fx.net, x, labels, 1.0);
  auto moved = x;
  for (std::size_t j = 0; j < moved.size(); ++j) moved[j] += 1e-2f * r.delta[j];
  const auto before = ce_per_example(fx.net, x, labels);
  const auto after = ce_per_example(fx.net, moved, labels);
  std::size_t eligible = 0, ascended = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (r.degenerate[k]) continue;
    ++eligible;
    ascended += after[k] > before[k];
  }
  ASSERT_GT(eligible, 0u);
  EXPECT_GE(static_cast<double>(ascended), 0.95 * static_cast<double>(eligible));
}

// ---------------------------------------------------------------------------

TEST(Uap, SingleExampleEqualsFgm) {
  const auto& fx = testkit::trained_fixture();
  const std::vector<std::size_t> one{3};
  const auto set = fx.test.subset(one);
  const auto uap = craft_uap_fgm(fx.net, set, 1.5);
  const auto fgm = fgm_no_channel(fx.net, set.tensor(set.all_indices()), set.int_labels(set.all_indices()), 1.5);
  ASSERT_EQ(uap.delta.size(), 256u);
  for (std::size_t j = 0; j < 256; ++j) EXPECT_NEAR(uap.delta[j], fgm.delta[j], 1e-6);
  EXPECT_NEAR(energy_of(uap.delta), 1.5, 1e-6);
  EXPECT_EQ(uap.kind, AttackKind::uap_fgm);
}

TEST(Uap, SymmetricToyCancelsToDegenerate) {
  const auto net = linear_toy(true);
  LabeledDataset set(4, {"A", "B"}, 10.0);
  const std::vector<float> x{0.1f, 0.2f, -0.3f, 0.4f, 0.0f, -0.1f, 0.2f, 0.05f};
  set.add(x, 0);
  set.add(x, 1);
  EXPECT_THROW(craft_uap_fgm(net, set, 1.0), DegenerateAttackError);
}

TEST(Uap, SamplesAreIdenticalAcrossCalls) {
  const auto a = uap_of(16, 0.7, 1);
  Rng rng(3);
  const auto first = sample_attack(a, rng);
  const auto second = sample_attack(a, rng);
  EXPECT_TRUE(std::equal(first.values().begin(), first.values().end(), second.values().begin()));
}

// ---------------------------------------------------------------------------

TEST(Pgm, DrawsRespectBudgetAndDiffer) {
  const auto& fx = testkit::trained_fixture();
  auto cfg = quick_gan(2);
  cfg.epochs = 1;
  Rng rng = make_rng(2, "test-pgm");
  const auto r = train_pgm(fx.net, fx.train, 5.0, cfg, rng);
  EXPECT_EQ(r.artifact.kind, AttackKind::pgm);
  EXPECT_TRUE(r.telemetry.rows.size() == 1 && std::isnan(r.telemetry.rows[0].d1_f1));
  Rng draw(9);
  const auto a = sample_attack(r.artifact, draw);
  const auto b = sample_attack(r.artifact, draw);
  EXPECT_LE(energy_of(a.values()), 5.0);
  double diff = 0;
  for (std::size_t j = 0; j < 256; ++j) diff += std::abs(a.values()[j] - b.values()[j]);
  EXPECT_GT(diff, 0.0);
}

TEST(Pgm, AttackedBelowCleanMedianOfFiveSeeds) {
  const auto& fx = testkit::trained_fixture();
  std::vector<double> acc;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng = make_rng(seed, "test-pgm");
    const auto r = train_pgm(fx.net, fx.train, pnr10_budget(), quick_gan(seed), rng);
    classifier::AttackSetting s;
    s.attack = &r.artifact;
    s.pnr_db = 10.0;
    s.seed = seed;
    acc.push_back(classifier::evaluate(fx.net, fx.test, s));
  }
  std::nth_element(acc.begin(), acc.begin() + 2, acc.end());
  EXPECT_LT(acc[2], fx.clean_accuracy);
}

TEST(Pgm, DivergenceIsTrainingError) {
  const auto& fx = testkit::trained_fixture();
  auto cfg = quick_gan(3);
  cfg.lr_g = 1e38;
  Rng rng(1);
  try {
    train_pgm(fx.net, fx.train, 1.0, cfg, rng);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 1u);
  }
}

TEST(Pgm, RejectsBadConfig) {
  const auto& fx = testkit::trained_fixture();
  Rng rng(1);
  auto cfg = quick_gan(1);
  EXPECT_THROW(train_pgm(fx.net, fx.train, 0.0, cfg, rng), ConfigError);
  cfg.epochs = 0;
  EXPECT_THROW(train_pgm(fx.net, fx.train, 1.0, cfg, rng), ConfigError);
  cfg = quick_gan(1);
  cfg.beta = -1;
  EXPECT_THROW(train_pgm(fx.net, fx.train, 1.0, cfg, rng), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Mrpp, AlignedPhaseBeatsEveryGridCandidate) {
  Rng rng(21);
  channel::ChannelDistribution dist;
  for (std::size_t p = 1; p <= 8; ++p) {
    const auto h = channel::sample_channel(dist, p, rng);
    const auto inner = uap_of(p, 1.0, p);
    const std::vector<channel::ChannelRealization> hs{h};
    const auto c = mrpp_compensation(hs);
    const double aligned = coherent_received_power(h, c, inner.delta);
    const std::vector<std::complex<float>> ones(p, 1.0f);
    EXPECT_GE(aligned, coherent_received_power(h, ones, inner.delta) - 1e-9);
    // Elements are independent, so the grid optimum is the per-element maximum.
    double grid_best = 0;
    for (std::size_t i = 0; i < p; ++i) {
      const double w = static_cast<double>(inner.delta[i]) * inner.delta[i] +
                       static_cast<double>(inner.delta[p + i]) * inner.delta[p + i];
      double best = -1e300;
      for (int deg = 0; deg < 360; ++deg) {
        const auto ci = std::polar(1.0, deg * std::numbers::pi / 180.0);
        best = std::max(best, w * std::real(h.coeffs[i] * ci));
      }
      grid_best += best;
    }
    EXPECT_GE(aligned, grid_best - 1e-6) << "p=" << p;
  }
}

TEST(Mrpp, PerFrameChannelGivesGlobalRotation) {
  channel::ChannelDistribution dist;
  dist.coherence = channel::Coherence::per_frame;
  auto inner = std::make_shared<AttackArtifact>(uap_of(32, 2.0, 4));
  Rng rng(5);
  const auto m = mrpp_transform(inner, dist, 1, rng);
  for (const auto& ci : m.compensation) {
    EXPECT_NEAR(std::abs(ci - m.compensation[0]), 0.0, 1e-6);
  }
  Rng draw(1);
  const auto out = sample_attack(m, draw);
  for (std::size_t i = 0; i < 32; ++i) {
    const auto expect = std::complex<double>(m.compensation[0]) * std::complex<double>(inner->delta[i], inner->delta[32 + i]);
    EXPECT_NEAR(out.values()[i], expect.real(), 1e-5);
    EXPECT_NEAR(out.values()[32 + i], expect.imag(), 1e-5);
  }
  EXPECT_LE(energy_of(out.values()), 2.0);
}

TEST(Mrpp, OpposingRealizationsFallBack) {
  std::vector<channel::ChannelRealization> hs{channel::ChannelRealization::identity(5),
                                              {std::vector<std::complex<double>>(5, -1.0)}};
  std::size_t fallbacks = 0;
  const auto c = mrpp_compensation(hs, &fallbacks);
  EXPECT_EQ(fallbacks, 5u);
  for (const auto& ci : c) EXPECT_EQ(ci, std::complex<float>(1.0f));
  EXPECT_THROW(mrpp_compensation(std::span<const channel::ChannelRealization>{}), ConfigError);
}

TEST(Mrpp, WrapsGeneratorsWithinBudget) {
  const auto& fx = testkit::trained_fixture();
  auto cfg = quick_gan(6);
  cfg.epochs = 1;
  Rng rng(6);
  auto pgm = std::make_shared<AttackArtifact>(train_pgm(fx.net, fx.train, 3.0, cfg, rng).artifact);
  channel::ChannelDistribution dist;
  const auto m = mrpp_transform(pgm, dist, 200, rng);
  EXPECT_EQ(m.metadata.at("compensation"), "phase-alignment stand-in");
  Rng draw(8);
  for (int i = 0; i < 200; ++i) ASSERT_LE(energy_of(sample_attack(m, draw).values()), 3.0);
  AttackArtifact fgm;
  fgm.kind = AttackKind::fgm;
  fgm.samples = 128;
  EXPECT_THROW(mrpp_transform(std::make_shared<AttackArtifact>(fgm), dist, 10, rng), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(CdiGan, TelemetryTermsSumToObjective) {
  const auto& r = quick_cdi_gan();
  ASSERT_EQ(r.telemetry.rows.size(), 2u);
  for (const auto& row : r.telemetry.rows) {
    EXPECT_NEAR(row.gen_objective, row.clf_loss_term + row.r1_term + row.r2_term, 1e-6);
    EXPECT_LE(row.r1_term, 0.0);
    EXPECT_LE(row.r2_term, 0.0);
    EXPECT_GE(row.d1_f1, 0.0);
    EXPECT_LE(row.d1_f1, 1.0);
    EXPECT_FALSE(std::isnan(row.d2_f1));
  }
  const auto csv = telemetry_csv(r.telemetry);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,gen_objective,clf_loss_term,r1_term,r2_term,d1_f1,d2_f1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(CdiGan, LeavesClassifierUntouched) {
  const auto& fx = testkit::trained_fixture();
  auto clf = fx.net;
  const auto before = nn::serialize(clf);
  channel::ChannelDistribution dist;
  auto cfg = quick_gan(8);
  cfg.epochs = 1;
  Rng rng(8);
  train_cdi_gan(clf, fx.train, 4.0, dist, channel::NoiseSpec{}, cfg, rng);
  EXPECT_EQ(nn::serialize(clf), before);
}

TEST(CdiGan, SamplesStayWithinBudgetAndDiffer) {
  const auto& a = quick_cdi_gan().artifact;
  EXPECT_EQ(a.kind, AttackKind::cdi_gan);
  EXPECT_TRUE(a.requires_channel());
  Rng rng(12);
  double worst = 0;
  IQFrame prev = sample_attack(a, rng);
  for (int i = 0; i < 1000; ++i) {
    const auto d = sample_attack(a, rng);
    worst = std::max(worst, energy_of(d.values()));
    if (i == 0) {
      double diff = 0;
      for (std::size_t j = 0; j < 256; ++j) diff += std::abs(d.values()[j] - prev.values()[j]);
      EXPECT_GT(diff, 0.0);
    }
  }
  EXPECT_LE(worst, a.p_max + 1e-6);
}

TEST(CdiGan, SameSeedSameArtifact) {
  const auto& fx = testkit::trained_fixture();
  channel::ChannelDistribution dist;
  Rng rng = make_rng(7, "test-gan");
  const auto again = train_cdi_gan(fx.net, fx.train, pnr10_budget(), dist, channel::NoiseSpec{}, quick_gan(7), rng);
  EXPECT_EQ(encode_artifact(again.artifact), encode_artifact(quick_cdi_gan().artifact));
}

TEST(CdiGan, WarmStartContinuesFromState) {
  const auto& fx = testkit::trained_fixture();
  const auto& first = quick_cdi_gan();
  channel::ChannelDistribution dist;
  auto cfg = quick_gan(7);
  cfg.epochs = 1;
  Rng rng(1);
  const auto more = train_cdi_gan(fx.net, fx.train, pnr10_budget(), dist, channel::NoiseSpec{}, cfg, rng, &first.state);
  EXPECT_NE(encode_artifact(more.artifact), encode_artifact(first.artifact));
  EXPECT_EQ(more.state.generator.param_count(), first.state.generator.param_count());
}

TEST(CdiGan, CollapseWarningAfterThreePinnedEpochs) {
  std::vector<GanTelemetryRow> rows;
  std::vector<std::string> warnings;
  for (std::size_t e = 1; e <= 5; ++e) {
    GanTelemetryRow r;
    r.epoch = e;
    r.d1_f1 = e == 1 ? 0.5 : 1.0;
    r.d2_f1 = 0.4;
    rows.push_back(r);
    detail::collapse_check(rows, true, warnings);
    detail::collapse_check(rows, false, warnings);
  }
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("d1"), std::string::npos);
  EXPECT_NE(warnings[0].find("2-4"), std::string::npos);
}

TEST(CdiGan, F1Score) {
  const std::vector<float> probs{0.9f, 0.8f, 0.2f, 0.7f};
  const std::vector<float> targets{1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(f1_score(probs, targets), 2.0 * 2 / (2.0 * 2 + 1 + 1));
  EXPECT_EQ(f1_score(std::vector<float>{0.1f}, std::vector<float>{0.0f}), 0.0);
}

// ---------------------------------------------------------------------------

TEST(Artifact, RoundTripsEveryKind) {
  std::vector<AttackArtifact> all;
  AttackArtifact fgm;
  fgm.kind = AttackKind::fgm;
  fgm.samples = 128;
  fgm.p_max = 1.0;
  all.push_back(fgm);
  auto uap = uap_of(128, 2.0, 3);
  uap.metadata["source"] = "test";
  all.push_back(uap);
  const auto& gan = quick_cdi_gan().artifact;
  all.push_back(gan);
  auto pgm = gan;
  pgm.kind = AttackKind::pgm;
  all.push_back(pgm);
  channel::ChannelDistribution dist;
  Rng rng(2);
  all.push_back(mrpp_transform(std::make_shared<AttackArtifact>(gan), dist, 50, rng));
  for (const auto& a : all) {
    const auto bytes = encode_artifact(a);
    const auto back = decode_artifact(bytes);
    EXPECT_EQ(back.kind, a.kind);
    EXPECT_EQ(back.p_max, a.p_max);
    EXPECT_EQ(back.metadata, a.metadata);
    EXPECT_EQ(encode_artifact(back), bytes) << to_string(a.kind);
    if (a.kind != AttackKind::fgm) {
      Rng r1(4), r2(4);
      const auto x = sample_attack(a, r1);
      const auto y = sample_attack(back, r2);
      EXPECT_TRUE(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
    }
  }
}

TEST(Artifact, CorruptionAndTruncationAreRejected) {
  const auto bytes = encode_artifact(uap_of(16, 1.0, 1));
  auto flipped = bytes;
  flipped[20] ^= 0x10;
  EXPECT_THROW(decode_artifact(flipped), FormatError);
  EXPECT_THROW(decode_artifact(std::string_view(bytes).substr(0, bytes.size() - 3)), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_artifact(magic), FormatError);
}

TEST(Artifact, KindNames) {
  for (auto k : {AttackKind::fgm, AttackKind::uap_fgm, AttackKind::pgm, AttackKind::cdi_gan, AttackKind::mrpp}) {
    EXPECT_EQ(parse_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_kind("deepfool"), ConfigError);
}
