#pragma once

// Fast-gradient perturbations: per-example no-channel FGM and the universal
// (input-agnostic) FGM perturbation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/error.hpp"
#include "rfadv/nn/loss.hpp"
#include "rfadv/signal/dataset.hpp"

namespace rfadv::attacks {

struct FgmResult {
  nn::Tensor<float> delta;          // same shape as the batch
  std::vector<bool> degenerate;     // zero input gradient, delta left at zero
  std::size_t degenerate_count() const { return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), true)); }
};

/// Input gradient of the per-example cross-entropy (sum reduction).
inline nn::Tensor<float> loss_input_gradient(const nn::Network<float>& net, const nn::Tensor<float>& batch,
                                             std::span<const int> labels) {
  nn::LossSpec spec;
  spec.reduction = nn::Reduction::sum;
  return nn::loss_and_grads(net, batch, labels, spec, nn::GradRequest{false, true}).input_grad;
}

/// delta_noch = sqrt(p_max) * grad_x L / ||grad_x L|| for every example.
inline FgmResult fgm_no_channel(const nn::Network<float>& net, const nn::Tensor<float>& batch, std::span<const int> labels,
                                double p_max) {
  if (!(p_max > 0.0) || !std::isfinite(p_max)) throw ConfigError("fgm needs a positive finite p_max");
  FgmResult out{loss_input_gradient(net, batch, labels), std::vector<bool>(batch.dim(0), false)};
  for (std::size_t k = 0; k < batch.dim(0); ++k) {
    auto row = out.delta.row(k);
    const double norm = std::sqrt(energy(row));
    if (norm == 0.0 || !std::isfinite(norm)) {
      std::fill(row.begin(), row.end(), 0.0f);
      out.degenerate[k] = true;
      continue;
    }
    // Scale in double first so tiny gradients do not lose precision.
    const double s = std::sqrt(p_max) / norm;
    for (auto& v : row) v = static_cast<float>(v * s);
    normalize_to_budget(row, p_max);
  }
  return out;
}

/// Universal perturbation: sum of the unit per-example FGM directions over the
/// sample set, rescaled onto the budget.
inline AttackArtifact craft_uap_fgm(const nn::Network<float>& net, const LabeledDataset& sample_set, double p_max,
                                    std::size_t chunk = 256) {
  if (sample_set.empty()) throw ConfigError("uap needs a nonempty sample set");
  if (!(p_max > 0.0) || !std::isfinite(p_max)) throw ConfigError("uap needs a positive finite p_max");
  const std::size_t width = 2 * sample_set.samples_per_frame();
  std::vector<double> sum(width, 0.0);
  const auto all = sample_set.all_indices();
  for (std::size_t start = 0; start < all.size(); start += chunk) {
    std::span<const std::size_t> idx(all.data() + start, std::min(chunk, all.size() - start));
    const auto labels = sample_set.int_labels(idx);
    const auto g = loss_input_gradient(net, sample_set.tensor(idx), labels);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto row = g.row(k);
      const double norm = std::sqrt(energy(row));
      if (norm == 0.0 || !std::isfinite(norm)) continue;
      for (std::size_t j = 0; j < width; ++j) sum[j] += row[j] / norm;
    }
  }
  double total = 0.0;
  for (double v : sum) total += v * v;
  // Cancellation below float resolution of the summed unit vectors counts as none left.
  if (!(std::sqrt(total) > 1e-6 * static_cast<double>(sample_set.size()))) {
    throw DegenerateAttackError("uap directions cancel out over the sample set");
  }
  AttackArtifact a;
  a.kind = AttackKind::uap_fgm;
  a.samples = sample_set.samples_per_frame();
  a.p_max = p_max;
  a.delta.resize(width);
  const double s = std::sqrt(p_max / total);
  for (std::size_t j = 0; j < width; ++j) a.delta[j] = static_cast<float>(sum[j] * s);
  normalize_to_budget(a.delta, p_max);
  return a;
}

/// `count` frames drawn without replacement.
inline LabeledDataset random_sample(const LabeledDataset& ds, std::size_t count, Rng& rng) {
  auto idx = ds.all_indices();
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, idx.size()));
  std::sort(idx.begin(), idx.end());
  return ds.subset(idx);
}

}  // namespace rfadv::attacks
