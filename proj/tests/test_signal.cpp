#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "rfadv/binary_io.hpp"
#include "rfadv/signal/dataset.hpp"
#include "rfadv/signal/synth.hpp"

using namespace rfadv;
using namespace rfadv::signal;

namespace {

SynthSpec spec_for(std::vector<std::string> classes, std::size_t per_class, double snr, std::size_t sps = 8) {
  SynthSpec s;
  s.classes = std::move(classes);
  s.frames_per_class = per_class;
  s.snr_db = snr;
  s.samples_per_symbol = sps;
  s.seed = 99;
  return s;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST(Synthesize, NoiselessBpskAtOneSamplePerSymbol) {
  const auto ds = synthesize(spec_for({"BPSK"}, 5, kInf, 1));
  ASSERT_EQ(ds.size(), 5u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto f = ds.frame(i);
    for (std::size_t k = 0; k < 128; ++k) {
      EXPECT_TRUE(f[k] == 1.0f || f[k] == -1.0f) << f[k];
      EXPECT_EQ(f[128 + k], 0.0f);
    }
  }
}

TEST(Synthesize, EveryClassHasUnitPowerBeforeNoise) {
  const auto ds = synthesize(spec_for(rml_classes(), 3, kInf));
  EXPECT_EQ(ds.num_classes(), 11u);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NEAR(mean_power(ds.frame(i)), 1.0, 1e-6) << ds.class_names()[ds.label(i)];
}

TEST(Synthesize, RealizedSnrMatchesRequest) {
  // Same seed without noise gives the clean counterpart of every frame.
  const auto noisy = synthesize(spec_for({"QPSK"}, 10000, 10.0));
  const auto clean = synthesize(spec_for({"QPSK"}, 10000, kInf));
  double signal = 0, noise = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    auto a = noisy.frame(i);
    auto b = clean.frame(i);
    for (std::size_t k = 0; k < a.size(); ++k) {
      signal += static_cast<double>(b[k]) * b[k];
      noise += std::pow(static_cast<double>(a[k]) - b[k], 2);
    }
  }
  EXPECT_NEAR(signal / noise, 10.0, 0.5);
  EXPECT_NEAR(10 * std::log10(signal / noise), 10.0, 0.5);
}

TEST(Synthesize, PhaseHistogramSeparatesQpskFrom8psk) {
  // Fraction of samples whose phase sits near an even multiple of pi/4.
  auto even_fraction = [](const LabeledDataset& ds) {
    std::size_t even = 0, total = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto f = ds.frame(i);
      for (std::size_t k = 0; k < 128; ++k) {
        const double phase = std::atan2(f[128 + k], f[k]);
        const long bin = std::lround(phase / (std::numbers::pi / 4));
        even += (bin % 2 == 0);
        ++total;
      }
    }
    return static_cast<double>(even) / static_cast<double>(total);
  };
  const double qpsk = even_fraction(synthesize(spec_for({"QPSK"}, 50, 20.0, 1)));
  const double psk8 = even_fraction(synthesize(spec_for({"8PSK"}, 50, 20.0, 1)));
  EXPECT_LT(qpsk, 0.05);
  EXPECT_NEAR(psk8, 0.5, 0.05);
}

TEST(Synthesize, RejectsUnknownClass) {
  try {
    synthesize(spec_for({"BPSK", "OOK"}, 1, 10.0));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("OOK"), std::string::npos);
  }
  EXPECT_EQ(canonical_class("16QAM"), "QAM16");
}

TEST(Synthesize, IsDeterministic) {
  EXPECT_EQ(synthesize(spec_for({"GFSK", "WBFM"}, 4, 5.0)), synthesize(spec_for({"GFSK", "WBFM"}, 4, 5.0)));
}

TEST(Portable, RoundTripIsBitExact) {
  const auto ds = synthesize(spec_for({"BPSK", "QAM16", "CPFSK"}, 7, 10.0));
  EXPECT_EQ(decode_portable(encode_portable(ds)), ds);
}

TEST(Portable, NoiselessSnrRoundTrips) {
  const auto ds = synthesize(spec_for({"BPSK"}, 2, kInf));
  EXPECT_TRUE(std::isinf(decode_portable(encode_portable(ds)).snr_db()));
}

TEST(Portable, EmptyDatasetIsValid) {
  LabeledDataset empty(128, {"BPSK", "QPSK"}, 10.0);
  const auto back = decode_portable(encode_portable(empty));
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.class_names(), empty.class_names());
}

TEST(Portable, RejectsCorruptFiles) {
  const auto bytes = encode_portable(synthesize(spec_for({"BPSK"}, 3, 10.0)));
  EXPECT_THROW(decode_portable(std::string_view(bytes).substr(0, bytes.size() - 6)), FormatError);
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  EXPECT_THROW(decode_portable(bad_magic), FormatError);
}

// Writes the layout field by field, independently of encode_portable, the way
// the external archive converter does.
namespace {

std::string converter_style_file(std::size_t frames, std::uint16_t label_override = 0xffff) {
  const auto& names = rml_classes();
  io::ByteWriter w;
  w.raw("RFDS");
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(frames));
  w.u16(128);
  w.u16(static_cast<std::uint16_t>(names.size()));
  for (const auto& n : names) {
    w.u16(static_cast<std::uint16_t>(n.size()));
    w.raw(n);
  }
  w.i16(10);
  for (std::size_t i = 0; i < frames; ++i) {
    for (int k = 0; k < 256; ++k) w.f32(0.01f * static_cast<float>(k % 7) - 0.03f);
    w.u16(label_override != 0xffff ? label_override : static_cast<std::uint16_t>(i % names.size()));
  }
  w.seal();
  return w.take();
}

}  // namespace

TEST(Portable, AcceptsConverterLayout) {
  const auto ds = decode_portable(converter_style_file(22), 10);
  EXPECT_EQ(ds.num_classes(), 11u);
  EXPECT_EQ(ds.samples_per_frame(), 128u);
  EXPECT_EQ(ds.size(), 22u);
  EXPECT_EQ(ds.snr_db(), 10.0);
  EXPECT_EQ(ds.label(13), 2);
  EXPECT_THROW(decode_portable(converter_style_file(2), 0), ConfigError);
}

TEST(Portable, RejectsOutOfRangeLabel) {
  EXPECT_THROW(decode_portable(converter_style_file(2, 11)), FormatError);
}

TEST(Split, StratifiedHalves) {
  const auto ds = synthesize(spec_for({"BPSK", "QPSK", "8PSK", "PAM4", "QAM16", "QAM64", "CPFSK", "GFSK", "WBFM", "AM-DSB"}, 10, 10.0));
  const auto [train, test] = split(ds, 0.5, 3);
  EXPECT_EQ(train.size(), 50u);
  EXPECT_EQ(test.size(), 50u);
  std::map<int, int> per_train, per_test;
  for (auto l : train.labels()) ++per_train[l];
  for (auto l : test.labels()) ++per_test[l];
  for (int c = 0; c < 10; ++c) {
    EXPECT_EQ(per_train[c], 5);
    EXPECT_EQ(per_test[c], 5);
  }
  // Disjoint and exhaustive: every source frame appears exactly once.
  std::multiset<std::vector<float>> all, halves;
  for (std::size_t i = 0; i < ds.size(); ++i) all.insert({ds.frame(i).begin(), ds.frame(i).end()});
  for (const auto* part : {&train, &test})
    for (std::size_t i = 0; i < part->size(); ++i) halves.insert({part->frame(i).begin(), part->frame(i).end()});
  EXPECT_EQ(all, halves);
}

TEST(Split, UnevenClassesStayWithinOneFrame) {
  auto s = spec_for({"BPSK", "QPSK", "8PSK"}, 7, 10.0);
  const auto ds = synthesize(s);
  const auto [train, test] = split(ds, 0.3, 1);
  std::map<int, int> counts;
  for (auto l : train.labels()) ++counts[l];
  for (auto [label, n] : counts) EXPECT_LE(std::abs(n - 0.3 * 7), 1.0);
  EXPECT_THROW(split(ds, 1.0, 1), ConfigError);
}

TEST(Batches, SeededOrderAndCoverage) {
  const auto ds = synthesize(spec_for({"BPSK", "QPSK"}, 25, 10.0));
  const auto a = batches(ds, 8, 5);
  const auto b = batches(ds, 8, 5);
  ASSERT_EQ(a.size(), 7u);  // 50 frames -> 6 full batches + 1 short
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto ia = a.indices(i);
    auto ib = b.indices(i);
    EXPECT_TRUE(std::equal(ia.begin(), ia.end(), ib.begin(), ib.end()));
    seen.insert(seen.end(), ia.begin(), ia.end());
  }
  EXPECT_EQ(a.indices(6).size(), 2u);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, ds.all_indices());

  std::size_t count = 0;
  for (const Batch& batch : a) {
    EXPECT_EQ(batch.inputs.dim(0), batch.labels.size());
    EXPECT_EQ(batch.inputs.shape(), (nn::Shape{batch.labels.size(), 1, 2, 128}));
    ++count;
  }
  EXPECT_EQ(count, 7u);
  EXPECT_THROW(batches(ds, 0, 1), ConfigError);
}
