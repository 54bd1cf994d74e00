#pragma once

// The legitimate receiver's modulation classifier: VTCNN2-style network,
// training loop and clean accuracy.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rfadv/error.hpp"
#include "rfadv/nn/adam.hpp"
#include "rfadv/nn/loss.hpp"
#include "rfadv/nn/network.hpp"
#include "rfadv/rng.hpp"
#include "rfadv/signal/dataset.hpp"

namespace rfadv::classifier {

using Net = nn::Network<float>;

enum class Architecture { vtcnn2, vtcnn2_small };

inline Architecture parse_architecture(const std::string& s) {
  if (s == "vtcnn2") return Architecture::vtcnn2;
  if (s == "vtcnn2-small") return Architecture::vtcnn2_small;
  throw ConfigError("unknown classifier architecture '" + s + "' (expected vtcnn2 or vtcnn2-small)");
}

inline std::string to_string(Architecture a) { return a == Architecture::vtcnn2 ? "vtcnn2" : "vtcnn2-small"; }

struct ClassifierConfig {
  Architecture architecture = Architecture::vtcnn2_small;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double dropout = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("classifier batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("classifier lr must be > 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }
};

inline std::vector<nn::LayerSpec> vtcnn2_layers(Architecture arch, double dropout, std::size_t classes) {
  const bool full = arch == Architecture::vtcnn2;
  return {nn::Conv2D{full ? 256u : 32u, 1, 3},
          nn::Relu{},
          nn::Dropout{dropout},
          nn::Conv2D{full ? 80u : 16u, 2, 3},
          nn::Relu{},
          nn::Dropout{dropout},
          nn::Flatten{},
          nn::Dense{full ? 256u : 64u},
          nn::Relu{},
          nn::Dropout{dropout},
          nn::Dense{classes},
          nn::Softmax{}};
}

inline Net build(const ClassifierConfig& cfg, std::size_t p, std::size_t num_classes) {
  cfg.validate();
  if (p < 8) throw ConfigError("classifier needs frames of at least 8 samples");
  if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
  Rng rng = make_rng(cfg.seed, "classifier-init");
  auto net = Net::build({1, 2, p}, vtcnn2_layers(cfg.architecture, cfg.dropout, num_classes), rng);
  net.metadata()["architecture"] = to_string(cfg.architecture);
  return net;
}

// ---------------------------------------------------------------------------
// Inference

inline std::size_t argmax(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// Class decisions for a batch {N, 1, 2, p}, evaluated in chunks.
inline std::vector<int> predict(const Net& net, const nn::Tensor<float>& inputs, std::size_t chunk = 256) {
  const std::size_t n = inputs.dim(0);
  std::vector<int> out(n);
  const std::size_t width = inputs.row_size();
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    nn::Shape shape = inputs.shape();
    shape[0] = count;
    nn::Tensor<float> part(shape);
    std::copy_n(inputs.values().begin() + static_cast<std::ptrdiff_t>(start * width), count * width,
                part.values().begin());
    const auto probs = net.forward(part);
    for (std::size_t k = 0; k < count; ++k) out[start + k] = static_cast<int>(argmax(probs.row(k)));
  }
  return out;
}

inline std::vector<int> predict(const Net& net, const LabeledDataset& ds) {
  return predict(net, ds.tensor(ds.all_indices()));
}

inline double accuracy(const Net& net, const LabeledDataset& ds) {
  if (ds.empty()) throw ConfigError("accuracy needs a nonempty dataset");
  const auto pred = predict(net, ds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += pred[i] == ds.label(i);
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Training

/// One Adam step on a labeled batch with dropout active; returns the mean loss.
inline double train_step(Net& net, const nn::Tensor<float>& inputs, std::span<const int> labels, double lr, Rng& rng) {
  auto res = nn::loss_and_grads(net, inputs, labels, {}, nn::GradRequest{true, false}, true, &rng);
  nn::adam_step(net, res.param_grads, nn::AdamConfig{lr});
  return res.loss;
}

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_acc = std::numeric_limits<double>::quiet_NaN();  // NaN without a validation set
};

struct TrainResult {
  Net net;
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
};

/// Hook that may rewrite each training batch before the step (used by
/// adversarial training); receives the current network and the epoch.
using BatchHook = std::function<void(const Net&, std::size_t epoch, Batch&)>;

/// Fixed-epoch training. With a validation set, the returned network is the
/// checkpoint with the best validation accuracy (earliest on ties).
inline TrainResult train(Net net, const LabeledDataset& train_ds, const ClassifierConfig& cfg,
                         const LabeledDataset* validation = nullptr, const BatchHook& hook = {},
                         const std::function<void(const Net&, std::size_t)>& on_epoch_start = {}) {
  cfg.validate();
  if (train_ds.empty()) throw ConfigError("training set is empty");
  Rng dropout_rng = make_rng(cfg.seed, "classifier-dropout");
  TrainResult result;
  std::optional<Net> best;
  double best_acc = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (on_epoch_start) on_epoch_start(net, epoch);
    const auto seq = batches(train_ds, cfg.batch_size, derive_seed(cfg.seed, "classifier-batches", epoch));
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < seq.size(); ++b) {
      Batch batch = seq[b];
      if (hook) hook(net, epoch, batch);
      double loss = 0.0;
      try {
        loss = train_step(net, batch.inputs, batch.labels, cfg.lr, dropout_rng);
      } catch (const NumericError& e) {
        throw TrainingError(std::string("classifier diverged: ") + e.what(), epoch);
      }
      total += loss * static_cast<double>(batch.labels.size());
      seen += batch.labels.size();
    }
    HistoryRow row{epoch, total / static_cast<double>(seen)};
    if (validation) {
      row.test_acc = accuracy(net, *validation);
      if (row.test_acc > best_acc) {
        best_acc = row.test_acc;
        best = net;
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(row);
  }
  if (best) {
    result.net = std::move(*best);
  } else {
    result.net = std::move(net);
    result.best_epoch = cfg.epochs;
  }
  return result;
}

inline std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out = "epoch,train_loss,test_acc\n";
  char line[96];
  for (const auto& h : history) {
    if (std::isnan(h.test_acc)) {
      std::snprintf(line, sizeof line, "%zu,%.6f,\n", h.epoch, h.train_loss);
    } else {
      std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", h.epoch, h.train_loss, h.test_acc);
    }
    out += line;
  }
  return out;
}

}  // namespace rfadv::classifier
