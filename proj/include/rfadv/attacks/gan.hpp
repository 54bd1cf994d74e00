#pragma once

// Generator-based attacks. PGM trains a trigger-to-perturbation generator
// against the classifier with no channel; the CDI-aware GAN adds sampled
// channel realizations and two discriminators that push the received
// perturbation toward AWGN-like (D1) and no-channel-FGM-like (D2) statistics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/attacks/fgm.hpp"
#include "rfadv/channel/channel.hpp"
#include "rfadv/classifier/model.hpp"
#include "rfadv/error.hpp"
#include "rfadv/nn/adam.hpp"
#include "rfadv/nn/layers.hpp"
#include "rfadv/nn/loss.hpp"
#include "rfadv/signal/dataset.hpp"

namespace rfadv::attacks {

using Net = nn::Network<float>;

struct GanConfig {
  double alpha = 1.0;
  double beta = 50.0;
  double lr_g = 1e-3;
  double lr_d = 1e-6;
  std::size_t epochs = 10;  // K
  std::size_t batch_size = 64;
  TriggerSpec trigger;
  // Gaussian reference z' ~ N(mean, variance) per real component; unset
  // variance means the receiver AWGN scale noise_power / 2.
  double gaussian_mean = 0.0;
  std::optional<double> gaussian_variance;
  // Hidden layers; the output layers (dense 2p for G, dense 1 + sigmoid for
  // the discriminators) are appended.
  std::string g_arch = "dense 256, relu, dense 256, relu";
  std::string d1_arch = "dense 128, relu, dense 64, relu";
  std::string d2_arch = "dense 128, relu, dense 64, relu";
  std::size_t channel_draws = 1;  // channel realizations per example per step
  std::size_t f1_pairs = 256;     // held-out pairs per telemetry evaluation
  std::uint64_t seed = 1;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be >= 0");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("GAN learning rates must be > 0");
    if (epochs < 1) throw ConfigError("GAN epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("GAN batch_size must be >= 1");
    if (channel_draws < 1) throw ConfigError("channel_draws must be >= 1");
    if (f1_pairs < 1) throw ConfigError("f1_pairs must be >= 1");
    if (gaussian_variance && !(*gaussian_variance > 0.0)) throw ConfigError("gaussian variance must be > 0");
    trigger.validate();
  }
};

struct GanTelemetryRow {
  std::size_t epoch = 0;
  double gen_objective = 0.0;
  double clf_loss_term = 0.0;
  double r1_term = 0.0;  // alpha * mean log(1 - D1(delta_e))
  double r2_term = 0.0;  // beta * mean log(1 - D2(delta_e))
  double d1_f1 = std::numeric_limits<double>::quiet_NaN();
  double d2_f1 = std::numeric_limits<double>::quiet_NaN();
};

struct GanTelemetry {
  std::vector<GanTelemetryRow> rows;
  std::vector<std::string> warnings;
};

/// Networks carried between calls so training can resume (defender refresh).
struct GanState {
  Net generator;
  std::optional<Net> d1, d2;
};

struct GanResult {
  AttackArtifact artifact;
  GanTelemetry telemetry;
  GanState state;
};

inline std::string telemetry_csv(const GanTelemetry& t) {
  std::string out = "epoch,gen_objective,clf_loss_term,r1_term,r2_term,d1_f1,d2_f1\n";
  char line[192];
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", v);
    return std::string(b);
  };
  for (const auto& r : t.rows) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f,", r.epoch, r.gen_objective, r.clf_loss_term, r.r1_term,
                  r.r2_term);
    out += line + num(r.d1_f1) + "," + num(r.d2_f1) + "\n";
  }
  return out;
}

/// F1 of the positive class for threshold-0.5 decisions.
inline double f1_score(std::span<const float> probs, std::span<const float> targets) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] > 0.5f;
    const bool truth = targets[i] > 0.5f;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

namespace detail {

inline Net build_generator(const GanConfig& cfg, std::size_t p, Rng& rng) {
  auto layers = nn::parse_layers(cfg.g_arch);
  layers.push_back(nn::Dense{2 * p});
  return Net::build({cfg.trigger.dim}, std::move(layers), rng);
}

inline Net build_discriminator(const std::string& arch, std::size_t p, Rng& rng) {
  auto layers = nn::parse_layers(arch);
  layers.push_back(nn::Dense{1});
  layers.push_back(nn::Sigmoid{});
  return Net::build({2 * p}, std::move(layers), rng);
}

/// Rows of `src` (each `width` wide) gathered into a new tensor.
inline nn::Tensor<float> stack_rows(std::span<const float> src, std::size_t width, nn::Shape row_shape) {
  nn::Shape shape{src.size() / width};
  shape.insert(shape.end(), row_shape.begin(), row_shape.end());
  return nn::Tensor<float>(std::move(shape), std::vector<float>(src.begin(), src.end()));
}

/// Input gradient of sum_k weight * log(1 - D(x_k)) and the per-row values.
inline std::pair<nn::Tensor<float>, std::vector<double>> log_one_minus_d(const Net& d, const nn::Tensor<float>& x) {
  const auto tr = d.trace(x);
  const std::size_t last = d.layer_count() - 1;  // the sigmoid
  const auto& logits = tr.activations[last];
  std::vector<double> values(logits.size());
  nn::Tensor<float> grad(logits.shape());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double a = logits[k];
    values[k] = -nn::detail::softplus(a);
    grad[k] = static_cast<float>(-1.0 / (1.0 + std::exp(-a)));  // d log(1 - sigmoid(a)) / da
  }
  auto g = d.backward(tr, std::move(grad), last, nn::GradRequest{false, true});
  return {std::move(g.input), std::move(values)};
}

/// One BCE Adam step on positives (label 1) stacked over negatives (label 0).
inline void discriminator_step(Net& d, std::span<const float> positives, std::span<const float> negatives,
                               std::size_t width, double lr) {
  std::vector<float> rows(positives.begin(), positives.end());
  rows.insert(rows.end(), negatives.begin(), negatives.end());
  std::vector<float> targets(rows.size() / width, 0.0f);
  std::fill(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(positives.size() / width), 1.0f);
  const auto x = stack_rows(rows, width, {width});
  nn::LossSpec spec{nn::LossKind::binary_cross_entropy, nn::Reduction::mean};
  auto res = nn::loss_and_grads(d, x, nn::LossTarget<float>(std::span<const float>(targets)), spec,
                                nn::GradRequest{true, false});
  nn::adam_step(d, res.param_grads, nn::AdamConfig{lr});
}

inline double discriminator_f1(const Net& d, std::span<const float> positives, std::span<const float> negatives,
                               std::size_t width) {
  std::vector<float> rows(positives.begin(), positives.end());
  rows.insert(rows.end(), negatives.begin(), negatives.end());
  std::vector<float> targets(rows.size() / width, 0.0f);
  std::fill(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(positives.size() / width), 1.0f);
  const auto out = d.forward(stack_rows(rows, width, {width}));
  return f1_score(out.values(), targets);
}

/// delta_e = H delta for each row, H drawn per row (identity without a distribution).
inline void through_channel(std::span<const float> delta, std::span<float> out,
                            std::vector<channel::ChannelRealization>& hs, const channel::ChannelDistribution* dist,
                            std::size_t p, Rng& rng) {
  const std::size_t width = 2 * p;
  const std::size_t rows = delta.size() / width;
  hs.resize(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    hs[k] = dist ? channel::sample_channel(*dist, p, rng) : channel::ChannelRealization::identity(p);
    channel::apply_channel(hs[k], delta.subspan(k * width, width), out.subspan(k * width, width));
  }
}

struct EngineSetup {
  const Net* classifier = nullptr;
  const LabeledDataset* data = nullptr;
  double p_max = 0.0;
  const channel::ChannelDistribution* channel = nullptr;  // null: identity (PGM)
  channel::NoiseSpec noise;
  bool discriminators = false;
  AttackKind kind = AttackKind::pgm;
};

inline void collapse_check(const std::vector<GanTelemetryRow>& rows, bool first, std::vector<std::string>& warnings) {
  const std::size_t n = rows.size();
  if (n < 3) return;
  auto pinned = [&](const GanTelemetryRow& r) {
    const double f = first ? r.d1_f1 : r.d2_f1;
    return f <= 0.01 || f >= 0.99;
  };
  // Report once per run of pinned epochs, when it reaches three.
  if (pinned(rows[n - 1]) && pinned(rows[n - 2]) && pinned(rows[n - 3]) && (n == 3 || !pinned(rows[n - 4]))) {
    warnings.push_back(std::string(first ? "d1" : "d2") + " collapse: f1 pinned at 0 or 1 for epochs " +
                       std::to_string(rows[n - 3].epoch) + "-" + std::to_string(rows[n - 1].epoch));
  }
}

inline GanResult run_generator_training(const EngineSetup& s, const GanConfig& cfg, Rng& rng, const GanState* warm) {
  cfg.validate();
  if (!s.classifier || !s.data || s.data->empty()) throw ConfigError("generator training needs a classifier and training frames");
  if (!(s.p_max > 0.0) || !std::isfinite(s.p_max)) throw ConfigError("generator training needs a positive finite p_max");
  s.noise.validate();
  const Net& clf = *s.classifier;
  const LabeledDataset& ds = *s.data;
  const std::size_t p = ds.samples_per_frame();
  const std::size_t width = 2 * p;
  if (clf.input_shape() != nn::Shape{1, 2, p}) throw ShapeError("classifier input does not match the frame length");

  GanState state;
  if (warm) {
    state = *warm;
  } else {
    Rng init = make_rng(cfg.seed, "gan-init");
    state.generator = build_generator(cfg, p, init);
    if (s.discriminators) {
      state.d1 = build_discriminator(cfg.d1_arch, p, init);
      state.d2 = build_discriminator(cfg.d2_arch, p, init);
    }
  }
  if (state.generator.input_shape() != nn::Shape{cfg.trigger.dim} || state.generator.output_shape() != nn::Shape{width}) {
    throw ShapeError("generator shape does not match trigger dimension and frame length");
  }
  if (s.discriminators && (!state.d1 || !state.d2)) throw ConfigError("CDI-GAN state lacks discriminators");

  // Classifier is frozen: its clean decisions (the attack targets) and the
  // per-example no-channel FGM perturbations are fixed for the whole run.
  const auto all = ds.all_indices();
  const auto targets = classifier::predict(clf, ds.tensor(all));
  std::vector<float> noch;
  if (s.discriminators) {
    noch.resize(ds.size() * width);
    for (std::size_t start = 0; start < ds.size(); start += 256) {
      std::span<const std::size_t> idx(all.data() + start, std::min<std::size_t>(256, ds.size() - start));
      const auto labels = ds.int_labels(idx);
      const auto f = fgm_no_channel(clf, ds.tensor(idx), labels, s.p_max);
      std::copy(f.delta.values().begin(), f.delta.values().end(), noch.begin() + static_cast<std::ptrdiff_t>(start * width));
    }
  }
  const double ref_var = cfg.gaussian_variance.value_or(s.noise.noise_power / 2.0);
  std::normal_distribution<double> gauss(cfg.gaussian_mean, std::sqrt(ref_var));
  const std::size_t draws = cfg.channel_draws;

  GanResult result;
  std::vector<channel::ChannelRealization> hs;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto seq = batches(ds, cfg.batch_size, derive_seed(cfg.seed, "gan-batches", epoch));
    double obj_sum = 0, clf_sum = 0, r1_sum = 0, r2_sum = 0;
    std::size_t seen = 0;
    try {
      for (std::size_t b = 0; b < seq.size(); ++b) {
        const auto idx = seq.indices(b);
        const std::size_t bsz = idx.size();
        const std::size_t rows = bsz * draws;

        // Lines 4-8: triggers, remapped perturbations, channel.
        nn::Tensor<float> z({bsz, cfg.trigger.dim});
        for (std::size_t k = 0; k < bsz; ++k) cfg.trigger.draw(z.row(k), rng);
        const auto gtrace = state.generator.trace(z);
        const auto& raw = gtrace.activations.back();
        std::vector<float> delta(raw.values().begin(), raw.values().end());
        std::vector<double> raw_norm(bsz);
        std::vector<bool> clipped(bsz);
        for (std::size_t k = 0; k < bsz; ++k) {
          auto row = std::span<float>(delta).subspan(k * width, width);
          raw_norm[k] = std::sqrt(energy(row));
          clipped[k] = raw_norm[k] * raw_norm[k] > s.p_max;
          remap_power_inplace(row, s.p_max);
        }
        std::vector<float> delta_rep(rows * width);
        for (std::size_t k = 0; k < bsz; ++k)
          for (std::size_t d = 0; d < draws; ++d)
            std::copy_n(delta.begin() + static_cast<std::ptrdiff_t>(k * width), width,
                        delta_rep.begin() + static_cast<std::ptrdiff_t>((k * draws + d) * width));
        std::vector<float> delta_e(rows * width);
        through_channel(delta_rep, delta_e, hs, s.channel, p, rng);

        // Lines 9-10: discriminator updates.
        if (s.discriminators) {
          std::vector<float> gaussian(rows * width);
          for (auto& v : gaussian) v = static_cast<float>(gauss(rng));
          std::vector<float> noch_rows(rows * width);
          for (std::size_t k = 0; k < bsz; ++k)
            for (std::size_t d = 0; d < draws; ++d)
              std::copy_n(noch.begin() + static_cast<std::ptrdiff_t>(idx[k] * width), width,
                          noch_rows.begin() + static_cast<std::ptrdiff_t>((k * draws + d) * width));
          discriminator_step(*state.d1, delta_e, gaussian, width, cfg.lr_d);
          discriminator_step(*state.d2, delta_e, noch_rows, width, cfg.lr_d);
        }

        // Lines 11-12: generator ascent on CE(f(x + delta_e), l_pred) + alpha R1 + beta R2.
        nn::Tensor<float> xe({rows, 1, 2, p});
        std::vector<int> labels(rows);
        for (std::size_t k = 0; k < bsz; ++k) {
          const auto x = ds.frame(idx[k]);
          for (std::size_t d = 0; d < draws; ++d) {
            const std::size_t r = k * draws + d;
            auto dst = xe.row(r);
            for (std::size_t j = 0; j < width; ++j) dst[j] = x[j] + delta_e[r * width + j];
            labels[r] = targets[idx[k]];
          }
        }
        nn::LossSpec sum_spec;
        sum_spec.reduction = nn::Reduction::sum;
        auto ce = nn::loss_and_grads(clf, xe, labels, sum_spec, nn::GradRequest{false, true});
        const double inv = 1.0 / static_cast<double>(rows);
        std::vector<double> grad_e(rows * width);
        for (std::size_t j = 0; j < grad_e.size(); ++j) grad_e[j] = ce.input_grad[j] * inv;
        double clf_term = 0, r1_term = 0, r2_term = 0;
        for (double v : ce.per_example) clf_term += v * inv;
        if (s.discriminators) {
          const auto de = stack_rows(delta_e, width, {width});
          for (int which = 0; which < 2; ++which) {
            const double weight = which == 0 ? cfg.alpha : cfg.beta;
            if (weight == 0.0) continue;
            auto [g, vals] = log_one_minus_d(which == 0 ? *state.d1 : *state.d2, de);
            double term = 0;
            for (double v : vals) term += v * inv;
            (which == 0 ? r1_term : r2_term) = weight * term;
            for (std::size_t j = 0; j < grad_e.size(); ++j) grad_e[j] += weight * inv * g[j];
          }
        }
        const double objective = clf_term + r1_term + r2_term;

        // Back through the channel (conj(h) per sample, summed over draws) and the remap.
        nn::Tensor<float> grad_raw({bsz, width});
        for (std::size_t k = 0; k < bsz; ++k) {
          std::vector<double> gd(width, 0.0);
          for (std::size_t d = 0; d < draws; ++d) {
            const std::size_t r = k * draws + d;
            for (std::size_t i = 0; i < p; ++i) {
              const std::complex<double> ge(grad_e[r * width + i], grad_e[r * width + p + i]);
              const auto g = std::conj(hs[r].coeffs[i]) * ge;
              gd[i] += g.real();
              gd[p + i] += g.imag();
            }
          }
          if (clipped[k]) {
            const double scale = std::sqrt(s.p_max) / raw_norm[k];
            auto rrow = raw.row(k);
            double dot = 0;
            for (std::size_t j = 0; j < width; ++j) dot += gd[j] * rrow[j] / raw_norm[k];
            for (std::size_t j = 0; j < width; ++j) gd[j] = scale * (gd[j] - dot * rrow[j] / raw_norm[k]);
          }
          // Minimizing the negated objective.
          auto out = grad_raw.row(k);
          for (std::size_t j = 0; j < width; ++j) out[j] = static_cast<float>(-gd[j]);
        }
        auto gg = state.generator.backward(gtrace, std::move(grad_raw), state.generator.layer_count(),
                                           nn::GradRequest{true, false});
        nn::adam_step(state.generator, gg.params, nn::AdamConfig{cfg.lr_g});

        const double w = static_cast<double>(bsz);
        obj_sum += objective * w;
        clf_sum += clf_term * w;
        r1_sum += r1_term * w;
        r2_sum += r2_term * w;
        seen += bsz;
      }
    } catch (const NumericError& e) {
      throw TrainingError(std::string("generator training diverged: ") + e.what(), epoch);
    }
    if (!std::isfinite(obj_sum)) throw TrainingError("generator objective is not finite", epoch);

    GanTelemetryRow row;
    row.epoch = epoch;
    row.clf_loss_term = clf_sum / static_cast<double>(seen);
    row.r1_term = r1_sum / static_cast<double>(seen);
    row.r2_term = r2_sum / static_cast<double>(seen);
    row.gen_objective = obj_sum / static_cast<double>(seen);

    if (s.discriminators) {
      // Fresh held-out pairs from a separate stream so telemetry does not
      // perturb training.
      Rng eval = make_rng(cfg.seed, "gan-f1", epoch);
      const std::size_t n = cfg.f1_pairs;
      std::vector<Rng> rngs;
      for (std::size_t k = 0; k < n; ++k) rngs.emplace_back(eval());
      AttackArtifact snapshot;
      snapshot.kind = s.kind;
      snapshot.samples = p;
      snapshot.p_max = s.p_max;
      snapshot.generator = state.generator;
      snapshot.trigger = cfg.trigger;
      std::vector<float> d(n * width), de(n * width), gaussian(n * width), nochs(n * width);
      draw_perturbations(snapshot, rngs, d);
      through_channel(d, de, hs, s.channel, p, eval);
      std::normal_distribution<double> g2(cfg.gaussian_mean, std::sqrt(ref_var));
      for (auto& v : gaussian) v = static_cast<float>(g2(eval));
      std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = pick(eval);
        std::copy_n(noch.begin() + static_cast<std::ptrdiff_t>(i * width), width,
                    nochs.begin() + static_cast<std::ptrdiff_t>(k * width));
      }
      row.d1_f1 = discriminator_f1(*state.d1, de, gaussian, width);
      row.d2_f1 = discriminator_f1(*state.d2, de, nochs, width);
    }
    result.telemetry.rows.push_back(row);
    if (s.discriminators) {
      collapse_check(result.telemetry.rows, true, result.telemetry.warnings);
      collapse_check(result.telemetry.rows, false, result.telemetry.warnings);
    }
  }

  AttackArtifact& a = result.artifact;
  a.kind = s.kind;
  a.samples = p;
  a.p_max = s.p_max;
  a.noise = s.noise;
  a.generator = state.generator;
  a.generator->optimizer_state() = {};
  a.trigger = cfg.trigger;
  std::ostringstream num;
  num.precision(17);
  auto put = [&](const std::string& k, double v) {
    num.str("");
    num << v;
    a.metadata[k] = num.str();
  };
  put("alpha", cfg.alpha);
  put("beta", cfg.beta);
  put("lr_g", cfg.lr_g);
  put("lr_d", cfg.lr_d);
  a.metadata["epochs"] = std::to_string(cfg.epochs);
  a.metadata["seed"] = std::to_string(cfg.seed);
  a.metadata["g_arch"] = cfg.g_arch;
  result.state = std::move(state);
  return result;
}

}  // namespace detail

/// No-channel generator baseline (objective with H = I, no discriminators).
inline GanResult train_pgm(const Net& clf, const LabeledDataset& train_ds, double p_max, const GanConfig& cfg, Rng& rng,
                           const GanState* warm = nullptr) {
  detail::EngineSetup s;
  s.classifier = &clf;
  s.data = &train_ds;
  s.p_max = p_max;
  s.kind = AttackKind::pgm;
  return detail::run_generator_training(s, cfg, rng, warm);
}

/// CDI-aware GAN: one D1 step, one D2 step and one G step per mini-batch.
inline GanResult train_cdi_gan(const Net& clf, const LabeledDataset& train_ds, double p_max,
                               const channel::ChannelDistribution& dist, const channel::NoiseSpec& noise,
                               const GanConfig& cfg, Rng& rng, const GanState* warm = nullptr) {
  dist.validate();
  detail::EngineSetup s;
  s.classifier = &clf;
  s.data = &train_ds;
  s.p_max = p_max;
  s.channel = &dist;
  s.noise = noise;
  s.discriminators = true;
  s.kind = AttackKind::cdi_gan;
  auto r = detail::run_generator_training(s, cfg, rng, warm);
  r.artifact.metadata["d1_arch"] = cfg.d1_arch;
  r.artifact.metadata["d2_arch"] = cfg.d2_arch;
  return r;
}

}  // namespace rfadv::attacks
