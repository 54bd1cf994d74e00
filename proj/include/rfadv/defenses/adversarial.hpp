#pragma once

// Adversarial training. Each batch keeps its clean frames and gains
// round(mix_ratio * B) perturbed copies crafted against the current
// classifier. Generator recipes refresh the defender's own generator at the
// start of every epoch, warm-started from the previous epoch.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfadv/attacks/fgm.hpp"
#include "rfadv/attacks/gan.hpp"
#include "rfadv/channel/channel.hpp"
#include "rfadv/defenses/smoothing.hpp"

namespace rfadv::defenses {

enum class Recipe { fgm, pgm, cdi_gan };

inline std::string to_string(Recipe r) {
  switch (r) {
    case Recipe::fgm: return "fgm";
    case Recipe::pgm: return "pgm";
    case Recipe::cdi_gan: return "cdi_gan";
  }
  return "?";
}

inline Recipe parse_recipe(const std::string& s) {
  for (auto r : {Recipe::fgm, Recipe::pgm, Recipe::cdi_gan}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown adversarial training recipe '" + s + "' (expected fgm, pgm or cdi_gan)");
}

inline attacks::GanConfig defender_gan_defaults() {
  attacks::GanConfig g;
  g.epochs = 1;  // per refresh
  g.g_arch = "dense 192, relu, dense 192, relu";
  g.d1_arch = "dense 96, relu, dense 48, relu";
  g.d2_arch = "dense 96, relu, dense 48, relu";
  g.seed = 1001;
  return g;
}

struct AdvTrainConfig {
  Recipe recipe = Recipe::cdi_gan;
  double mix_ratio = 0.5;
  std::vector<double> pnr_schedule{-10.0, 0.0, 10.0};  // cycled per batch
  std::size_t epochs = 20;
  bool from_scratch = true;  // false: fine-tune the given network
  std::uint64_t seed = 1;
  attacks::GanConfig gan = defender_gan_defaults();
  double gan_train_pnr_db = 10.0;  // budget the defender's generator trains at
  std::size_t gan_frames = 0;      // frames per refresh, 0: the whole training set

  void validate() const {
    if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) throw ConfigError("mix_ratio must lie in (0, 1]");
    if (pnr_schedule.empty()) throw ConfigError("pnr_schedule must not be empty");
    for (double v : pnr_schedule) {
      if (!std::isfinite(v)) throw ConfigError("pnr_schedule values must be finite");
    }
    if (epochs < 1) throw ConfigError("adversarial training epochs must be >= 1");
    if (recipe != Recipe::fgm) gan.validate();
  }
};

struct AdvTrainResult : DefenseResult {
  attacks::GanTelemetry gan_telemetry;
  std::optional<attacks::AttackArtifact> last_generator;
};

/// Trains cfg.epochs epochs on the mixed batches, from a fresh network built
/// from clf_cfg or, with from_scratch off, starting at `net`.
inline AdvTrainResult adversarial_train(const Net& net, const LabeledDataset& train_ds, const AdvTrainConfig& cfg,
                                        const classifier::ClassifierConfig& clf_cfg,
                                        const channel::ChannelDistribution& dist, const channel::NoiseSpec& noise,
                                        const LabeledDataset* validation = nullptr) {
  cfg.validate();
  dist.validate();
  noise.validate();
  if (train_ds.empty()) throw ConfigError("training set is empty");
  const std::size_t p = train_ds.samples_per_frame();
  const std::size_t width = 2 * p;
  const bool generator = cfg.recipe != Recipe::fgm;
  const double gain = generator ? dist.expected_power_gain() : 1.0;

  AdvTrainResult out;
  std::optional<attacks::GanState> state;
  std::optional<attacks::AttackArtifact> artifact;
  LabeledDataset gan_data;
  if (generator) {
    if (cfg.gan_frames > 0 && cfg.gan_frames < train_ds.size()) {
      Rng pick = make_rng(cfg.seed, "adv-gan-frames");
      gan_data = attacks::random_sample(train_ds, cfg.gan_frames, pick);
    } else {
      gan_data = train_ds;
    }
  }
  const double gan_budget = channel::budget_for_pnr(cfg.gan_train_pnr_db, noise.noise_power, p, gain);

  auto refresh = [&](const Net& current, std::size_t epoch) {
    if (!generator) return;
    auto gcfg = cfg.gan;
    gcfg.seed = derive_seed(cfg.gan.seed, "defender-refresh", epoch);
    Rng rng = make_rng(cfg.seed, "adv-gan", epoch);
    const attacks::GanState* warm = state ? &*state : nullptr;
    try {
      auto r = cfg.recipe == Recipe::cdi_gan
                   ? attacks::train_cdi_gan(current, gan_data, gan_budget, dist, noise, gcfg, rng, warm)
                   : attacks::train_pgm(current, gan_data, gan_budget, gcfg, rng, warm);
      for (auto row : r.telemetry.rows) {
        row.epoch = out.gan_telemetry.rows.size() + 1;
        out.gan_telemetry.rows.push_back(row);
      }
      for (auto& w : r.telemetry.warnings) out.gan_telemetry.warnings.push_back("refresh " + std::to_string(epoch) + ": " + w);
      state = std::move(r.state);
      artifact = std::move(r.artifact);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("defender generator refresh failed: ") + e.what(), epoch);
    }
  };

  Rng mix_rng = make_rng(cfg.seed, "adv-mix");
  std::size_t batch_counter = 0;
  auto hook = [&](const Net& current, std::size_t, Batch& batch) {
    const std::size_t bsz = batch.labels.size();
    const auto n_adv = static_cast<std::size_t>(std::llround(cfg.mix_ratio * static_cast<double>(bsz)));
    const double pnr = cfg.pnr_schedule[batch_counter++ % cfg.pnr_schedule.size()];
    if (n_adv == 0) return;
    const double budget = channel::budget_for_pnr(pnr, noise.noise_power, p, gain);

    nn::Tensor<float> clean({n_adv, 1, 2, p});
    std::vector<int> labels(batch.labels.begin(), batch.labels.begin() + static_cast<std::ptrdiff_t>(n_adv));
    for (std::size_t k = 0; k < n_adv; ++k) {
      const auto src = batch.inputs.row(k);
      std::copy(src.begin(), src.end(), clean.row(k).begin());
    }
    std::vector<float> delta(n_adv * width, 0.0f);
    if (!generator) {
      const auto f = attacks::fgm_no_channel(current, clean, labels, budget);
      std::copy(f.delta.values().begin(), f.delta.values().end(), delta.begin());
    } else {
      std::vector<Rng> rngs;
      for (std::size_t k = 0; k < n_adv; ++k) rngs.emplace_back(mix_rng());
      attacks::draw_perturbations(*artifact, rngs, delta);
      for (std::size_t k = 0; k < n_adv; ++k) {
        auto d = std::span<float>(delta).subspan(k * width, width);
        attacks::normalize_to_budget(d, budget);
        const auto h = channel::sample_channel(dist, p, mix_rng);
        channel::apply_channel(h, d, d);
      }
    }

    nn::Tensor<float> mixed({bsz + n_adv, 1, 2, p});
    std::copy(batch.inputs.values().begin(), batch.inputs.values().end(), mixed.values().begin());
    for (std::size_t k = 0; k < n_adv; ++k) {
      auto dst = mixed.row(bsz + k);
      const auto src = clean.row(k);
      for (std::size_t j = 0; j < width; ++j) dst[j] = src[j] + delta[k * width + j];
      batch.labels.push_back(labels[k]);
    }
    batch.inputs = std::move(mixed);
  };

  auto adv_cfg = clf_cfg;
  adv_cfg.epochs = cfg.epochs;
  auto start = cfg.from_scratch ? classifier::build(clf_cfg, p, train_ds.num_classes()) : net;
  auto res = classifier::train(std::move(start), train_ds, adv_cfg, validation, hook, refresh);
  out.net = std::move(res.net);
  out.history = std::move(res.history);
  out.warnings = out.gan_telemetry.warnings;
  out.last_generator = std::move(artifact);

  auto& m = out.net.metadata();
  m["defense"] = "adversarial_training";
  m["recipe"] = to_string(cfg.recipe);
  std::ostringstream s;
  s << cfg.mix_ratio;
  m["mix_ratio"] = s.str();
  std::string sched;
  for (double v : cfg.pnr_schedule) {
    std::ostringstream one;
    one << v;
    sched += (sched.empty() ? "" : " ") + one.str();
  }
  m["pnr_schedule"] = sched;
  m["defense_epochs"] = std::to_string(cfg.epochs);
  m["from_scratch"] = cfg.from_scratch ? "true" : "false";
  m["defense_seed"] = std::to_string(cfg.seed);
  m["classifier_seed"] = std::to_string(clf_cfg.seed);
  if (generator) {
    m["defender_gan_seed"] = std::to_string(cfg.gan.seed);
    m["defender_g_arch"] = cfg.gan.g_arch;
  }
  return out;
}

}  // namespace rfadv::defenses
