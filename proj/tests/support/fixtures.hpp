#pragma once

// Small trained classifier shared by the classifier, attack and defense tests.

#include "rfadv/classifier/model.hpp"
#include "rfadv/signal/synth.hpp"

namespace rfadv::testkit {

struct TrainedFixture {
  LabeledDataset train, test;
  classifier::ClassifierConfig cfg;
  classifier::Net net;
  double clean_accuracy = 0.0;
};

inline signal::SynthSpec small_spec(std::size_t per_class, std::uint64_t seed,
                                    std::vector<std::string> classes = {"BPSK", "QPSK", "8PSK", "QAM16"}) {
  signal::SynthSpec s;
  s.classes = std::move(classes);
  s.frames_per_class = per_class;
  s.snr_db = 10.0;
  s.seed = seed;
  return s;
}

inline const TrainedFixture& trained_fixture() {
  static const TrainedFixture fx = [] {
    TrainedFixture f;
    auto [tr, te] = split(signal::synthesize(small_spec(150, 4, {"BPSK", "QPSK", "PAM4", "AM-DSB"})), 2.0 / 3.0, 4);
    f.train = std::move(tr);
    f.test = std::move(te);
    f.cfg.epochs = 12;
    f.cfg.dropout = 0.3;
    f.cfg.seed = 4;
    f.net = classifier::train(classifier::build(f.cfg, 128, 4), f.train, f.cfg).net;
    f.clean_accuracy = classifier::accuracy(f.net, f.test);
    return f;
  }();
  return fx;
}

}  // namespace rfadv::testkit
