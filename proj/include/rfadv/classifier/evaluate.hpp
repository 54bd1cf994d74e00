#pragma once

// Accuracy of a classifier under an over-the-air attack: every frame gets an
// independent perturbation (and channel realization) scaled to the target PNR.

#include <cmath>
#include <optional>
#include <vector>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/attacks/fgm.hpp"
#include "rfadv/channel/channel.hpp"
#include "rfadv/classifier/model.hpp"

namespace rfadv::classifier {

struct AttackSetting {
  const attacks::AttackArtifact* attack = nullptr;
  const channel::ChannelDistribution* channel = nullptr;  // null: identity path
  std::optional<double> pnr_db;  // unset: the artifact's own budget
  double noise_power = 0.1;      // P_n the PNR refers to
  std::uint64_t seed = 0;
};

/// Per-frame transmit budget for a target PNR: no-channel paths use unit gain.
inline double budget_for_setting(const AttackSetting& s, std::size_t p) {
  if (!s.pnr_db) return s.attack->p_max;
  const double gain = s.channel ? s.channel->expected_power_gain() : 1.0;
  return channel::budget_for_pnr(*s.pnr_db, s.noise_power, p, gain);
}

/// Received frames x + H delta for dataset frames [start, start + count).
inline nn::Tensor<float> attacked_inputs(const Net& net, const LabeledDataset& ds, std::size_t start, std::size_t count,
                                         const AttackSetting& s) {
  const std::size_t p = ds.samples_per_frame();
  const std::size_t width = 2 * p;
  const auto& a = *s.attack;
  std::vector<std::size_t> idx(count);
  for (std::size_t k = 0; k < count; ++k) idx[k] = start + k;
  auto x = ds.tensor(idx);
  const double p_max = budget_for_setting(s, p);

  std::vector<Rng> rngs;
  rngs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) rngs.push_back(make_rng(s.seed, "eval-frame", start + k));

  std::vector<float> delta(count * width, 0.0f);
  if (a.kind == attacks::AttackKind::fgm) {
    if (p_max > 0.0) {
      const auto labels = ds.int_labels(idx);
      const auto f = attacks::fgm_no_channel(net, x, labels, p_max);
      std::copy(f.delta.values().begin(), f.delta.values().end(), delta.begin());
    }
  } else {
    attacks::draw_perturbations(a, rngs, delta);
    if (s.pnr_db) {
      // Every perturbation is put on the target budget so the realized PNR
      // matches the target whatever power the artifact chose.
      for (std::size_t k = 0; k < count; ++k) {
        auto d = std::span<float>(delta).subspan(k * width, width);
        if (p_max > 0.0) {
          attacks::normalize_to_budget(d, p_max);
        } else {
          std::fill(d.begin(), d.end(), 0.0f);
        }
      }
    }
  }
  for (std::size_t k = 0; k < count; ++k) {
    auto d = std::span<float>(delta).subspan(k * width, width);
    if (s.channel) {
      const auto h = channel::sample_channel(*s.channel, p, rngs[k]);
      channel::apply_channel(h, d, d);
    }
    auto row = x.row(k);
    for (std::size_t j = 0; j < width; ++j) row[j] += d[j];
  }
  return x;
}

/// Clean accuracy without an attack; otherwise accuracy on attacked frames.
inline double evaluate(const Net& net, const LabeledDataset& ds, const AttackSetting& s = {}) {
  if (ds.empty()) throw ConfigError("evaluation needs a nonempty dataset");
  if (!s.attack) return accuracy(net, ds);
  s.attack->validate();
  if (s.attack->samples != ds.samples_per_frame()) throw ShapeError("attack frame length does not match the dataset");
  if (s.attack->requires_channel() && !s.channel) {
    throw ConfigError(attacks::to_string(s.attack->kind) + " attack is channel-aware and needs a channel distribution");
  }
  constexpr std::size_t chunk = 256;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t count = std::min(chunk, ds.size() - start);
    const auto pred = predict(net, attacked_inputs(net, ds, start, count, s), chunk);
    for (std::size_t k = 0; k < count; ++k) hits += pred[k] == ds.label(start + k);
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

}  // namespace rfadv::classifier
