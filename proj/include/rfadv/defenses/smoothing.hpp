#pragma once

// Gaussian smoothing: the training set grows by k noisy copies of every frame
// and the classifier is retrained from scratch on the union.

#include <cmath>
#include <random>
#include <string>

#include "rfadv/classifier/evaluate.hpp"
#include "rfadv/classifier/model.hpp"
#include "rfadv/error.hpp"
#include "rfadv/signal/dataset.hpp"

namespace rfadv::defenses {

using Net = classifier::Net;

struct SmoothingConfig {
  double sigma = 0.005;  // per real component
  std::size_t k = 10;
  std::size_t max_frames = 2'000'000;  // cap on the augmented set
  std::uint64_t seed = 1;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("smoothing sigma must be > 0");
    if (k < 1) throw ConfigError("smoothing k must be >= 1");
  }
};

struct DefenseResult {
  Net net;
  std::vector<classifier::HistoryRow> history;
  std::vector<std::string> warnings;
};

/// Originals first, then copy j of every frame for j = 1..k.
inline LabeledDataset smooth_augment(const LabeledDataset& ds, const SmoothingConfig& cfg) {
  cfg.validate();
  const std::size_t total = (cfg.k + 1) * ds.size();
  if (total > cfg.max_frames) {
    throw ConfigError("smoothing would build " + std::to_string(total) + " frames, above the cap of " +
                      std::to_string(cfg.max_frames));
  }
  LabeledDataset out = ds;
  Rng rng = make_rng(cfg.seed, "smoothing-noise");
  std::normal_distribution<double> noise(0.0, cfg.sigma);
  std::vector<float> buf(2 * ds.samples_per_frame());
  for (std::size_t copy = 1; copy <= cfg.k; ++copy) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto f = ds.frame(i);
      for (std::size_t j = 0; j < buf.size(); ++j) buf[j] = static_cast<float>(f[j] + noise(rng));
      out.add(buf, ds.label(i));
    }
  }
  return out;
}

inline DefenseResult gaussian_smooth_train(const LabeledDataset& train_ds, const SmoothingConfig& cfg,
                                           const classifier::ClassifierConfig& clf_cfg,
                                           const LabeledDataset* validation = nullptr) {
  const auto augmented = smooth_augment(train_ds, cfg);
  auto fresh = classifier::build(clf_cfg, train_ds.samples_per_frame(), train_ds.num_classes());
  auto res = classifier::train(std::move(fresh), augmented, clf_cfg, validation);
  DefenseResult out{std::move(res.net), std::move(res.history), {}};
  auto& m = out.net.metadata();
  m["defense"] = "gaussian_smoothing";
  m["sigma"] = std::to_string(cfg.sigma);
  m["k"] = std::to_string(cfg.k);
  m["defense_seed"] = std::to_string(cfg.seed);
  m["classifier_seed"] = std::to_string(clf_cfg.seed);
  return out;
}

/// Reported check: the defense may lower clean accuracy by at most `tolerance`.
struct CleanAccuracyCheck {
  double undefended = 0.0;
  double defended = 0.0;
  double tolerance = 0.05;
  bool within() const { return undefended - defended <= tolerance; }
  std::string message() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "clean accuracy %.4f -> %.4f (tolerance %.2f): %s", undefended, defended, tolerance,
                  within() ? "ok" : "degraded beyond tolerance");
    return buf;
  }
};

inline CleanAccuracyCheck check_clean_accuracy(const Net& undefended, const Net& defended, const LabeledDataset& test,
                                               double tolerance = 0.05) {
  return {classifier::accuracy(undefended, test), classifier::accuracy(defended, test), tolerance};
}

}  // namespace rfadv::defenses
