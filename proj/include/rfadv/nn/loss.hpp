#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rfadv/error.hpp"
#include "rfadv/nn/network.hpp"

namespace rfadv::nn {

enum class LossKind { cross_entropy, binary_cross_entropy };
enum class Reduction { mean, sum };

struct LossSpec {
  LossKind kind = LossKind::cross_entropy;
  Reduction reduction = Reduction::mean;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  std::vector<double> per_example;  // unreduced losses
  std::vector<T> param_grads;
  Tensor<T> input_grad;
  Tensor<T> output;  // network output (probabilities) for the batch
};

namespace detail {

inline double log_sum_exp(std::span<const double> z) {
  double peak = z[0];
  for (double v : z) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  return peak + std::log(total);
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Target for a loss: class labels for cross-entropy, {0,1} values for BCE.
template <typename T>
using LossTarget = std::variant<std::span<const int>, std::span<const T>>;

/// Loss of `net` on `input` plus gradients w.r.t. parameters and input.
/// Cross-entropy requires a trailing softmax layer and BCE a trailing sigmoid;
/// both are evaluated on the pre-activation logits so saturated outputs stay finite.
template <typename T>
LossResult<T> loss_and_grads(const Network<T>& net, const Tensor<T>& input, LossTarget<T> target,
                             LossSpec spec = {}, GradRequest request = {}, bool train_mode = false,
                             Rng* rng = nullptr) {
  const std::size_t layers = net.layer_count();
  if (layers == 0) throw ConfigError("loss needs a network with a final activation layer");
  const auto& last = net.layers().back();
  const bool ce = spec.kind == LossKind::cross_entropy;
  if (ce && !std::holds_alternative<Softmax>(last)) throw ConfigError("cross-entropy needs a final softmax layer");
  if (!ce && !std::holds_alternative<Sigmoid>(last)) throw ConfigError("binary cross-entropy needs a final sigmoid layer");

  Trace<T> tr = net.trace(input, train_mode, rng);
  const Tensor<T>& logits = tr.activations[layers - 1];
  const std::size_t n = logits.dim(0);
  const std::size_t width = logits.row_size();
  const double scale = spec.reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;

  LossResult<T> result;
  result.per_example.resize(n);
  Tensor<T> grad(logits.shape());

  if (ce) {
    const auto* labels = std::get_if<std::span<const int>>(&target);
    if (!labels || labels->size() != n) throw ConfigError("cross-entropy needs one label per example");
    std::vector<double> z(width);
    for (std::size_t k = 0; k < n; ++k) {
      const int label = (*labels)[k];
      if (label < 0 || static_cast<std::size_t>(label) >= width) {
        throw ConfigError("label " + std::to_string(label) + " outside [0, " + std::to_string(width) + ")");
      }
      auto row = logits.row(k);
      for (std::size_t j = 0; j < width; ++j) z[j] = row[j];
      const double lse = detail::log_sum_exp(z);
      result.per_example[k] = lse - z[label];
      // Softmax redone in double from the logits so confident rows keep a
      // nonzero gradient; the true-class entry is minus the off-class mass.
      auto g = grad.row(k);
      double off_class = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        if (static_cast<int>(j) == label) continue;
        const double pj = std::exp(z[j] - lse);
        off_class += pj;
        g[j] = static_cast<T>(pj * scale);
      }
      g[label] = static_cast<T>(-off_class * scale);
    }
  } else {
    const auto* targets = std::get_if<std::span<const T>>(&target);
    if (!targets || targets->size() != logits.size()) throw ConfigError("BCE needs one target per output");
    for (std::size_t k = 0; k < n; ++k) {
      double total = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t idx = k * width + j;
        const double t = (*targets)[idx];
        if (t != 0.0 && t != 1.0) throw ConfigError("BCE targets must be 0 or 1");
        const double a = logits[idx];
        total += detail::softplus(a) - t * a;
        grad[idx] = static_cast<T>((1.0 / (1.0 + std::exp(-a)) - t) * scale);
      }
      result.per_example[k] = total;
    }
  }

  double total = 0.0;
  for (double v : result.per_example) total += v;
  result.loss = total * scale;
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss", static_cast<std::ptrdiff_t>(layers - 1));

  auto grads = net.backward(tr, std::move(grad), layers - 1, request);
  result.param_grads = std::move(grads.params);
  result.input_grad = std::move(grads.input);
  result.output = std::move(tr.activations.back());
  return result;
}

template <typename T>
LossResult<T> loss_and_grads(const Network<T>& net, const Tensor<T>& input, std::span<const int> labels,
                             LossSpec spec = {}, GradRequest request = {}, bool train_mode = false,
                             Rng* rng = nullptr) {
  return loss_and_grads<T>(net, input, LossTarget<T>(labels), spec, request, train_mode, rng);
}

}  // namespace rfadv::nn
