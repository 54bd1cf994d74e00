#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "rfadv/error.hpp"
#include "rfadv/nn/layers.hpp"
#include "rfadv/nn/tensor.hpp"
#include "rfadv/rng.hpp"

namespace rfadv::nn {

template <typename T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step = 0;
};

/// Per-layer activations kept by a forward pass for the backward pass.
template <typename T>
struct Trace {
  std::vector<Tensor<T>> activations;          // [0] is the input, [i + 1] the output of layer i
  std::vector<std::vector<T>> dropout_masks;   // empty unless dropout ran in train mode
};

struct GradRequest {
  bool params = true;
  bool input = true;
};

template <typename T>
struct Gradients {
  std::vector<T> params;  // aligned with Network::params(); empty if not requested
  Tensor<T> input;        // same shape as the batch; empty if not requested
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using MapRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

struct ConvGeometry {
  std::size_t channels, rows, cols, filters, kernel_rows, kernel_cols, out_rows, pad_left;
  std::size_t patch() const { return channels * kernel_rows * kernel_cols; }
  std::size_t out_positions() const { return out_rows * cols; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t positions = g.out_positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_rows; ++i) {
      for (std::size_t j = 0; j < g.kernel_cols; ++j) {
        T* dst = cols + ((c * g.kernel_rows + i) * g.kernel_cols + j) * positions;
        for (std::size_t oh = 0; oh < g.out_rows; ++oh) {
          const T* src = x + (c * g.rows + oh + i) * g.cols;
          T* out = dst + oh * g.cols;
          for (std::size_t ow = 0; ow < g.cols; ++ow) {
            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(ow + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            out[ow] = (s >= 0 && s < static_cast<std::ptrdiff_t>(g.cols)) ? src[s] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t positions = g.out_positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_rows; ++i) {
      for (std::size_t j = 0; j < g.kernel_cols; ++j) {
        const T* src = cols + ((c * g.kernel_rows + i) * g.kernel_cols + j) * positions;
        for (std::size_t oh = 0; oh < g.out_rows; ++oh) {
          T* dst = dx + (c * g.rows + oh + i) * g.cols;
          const T* in = src + oh * g.cols;
          for (std::size_t ow = 0; ow < g.cols; ++ow) {
            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(ow + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (s >= 0 && s < static_cast<std::ptrdiff_t>(g.cols)) dst[s] += in[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Feed-forward network over a fixed per-example input shape. Parameters live
/// in one flat vector (per layer: weights, then bias) so optimizers and file
/// formats can treat them uniformly. Networks are plain values.
template <typename T>
class Network {
  static_assert(std::is_floating_point_v<T>);

 public:
  using Scalar = T;

  Network() = default;

  Network(Shape input_shape, std::vector<LayerSpec> layers)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (input_shape_.empty()) throw ConfigError("network input shape must not be empty");
    for (std::size_t d : input_shape_) {
      if (d == 0) throw ConfigError("network input dimensions must be positive");
    }
    Shape shape = input_shape_;
    std::size_t offset = 0;
    for (const auto& layer : layers_) {
      Slot slot;
      slot.in = shape;
      slot.out = nn::output_shape(layer, shape);
      if (const auto* d = std::get_if<Dense>(&layer)) {
        slot.weight_offset = offset;
        slot.weight_size = d->units * shape[0];
        slot.bias_offset = offset + slot.weight_size;
        slot.bias_size = d->units;
      } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
        slot.weight_offset = offset;
        slot.weight_size = c->filters * shape[0] * c->kernel_rows * c->kernel_cols;
        slot.bias_offset = offset + slot.weight_size;
        slot.bias_size = c->filters;
      }
      offset += slot.weight_size + slot.bias_size;
      shape = slot.out;
      slots_.push_back(std::move(slot));
    }
    params_.assign(offset, T{0});
  }

  /// Builds and initializes weights uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at 0.
  static Network build(Shape input_shape, std::vector<LayerSpec> layers, Rng& rng) {
    Network net(std::move(input_shape), std::move(layers));
    net.initialize(rng);
    return net;
  }

  void initialize(Rng& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Slot& s = slots_[i];
      if (s.weight_size == 0) continue;
      double fan_in = 0, fan_out = 0;
      if (const auto* d = std::get_if<Dense>(&layers_[i])) {
        fan_in = static_cast<double>(s.in[0]);
        fan_out = static_cast<double>(d->units);
      } else {
        const auto& c = std::get<Conv2D>(layers_[i]);
        const double k = static_cast<double>(c.kernel_rows * c.kernel_cols);
        fan_in = static_cast<double>(s.in[0]) * k;
        fan_out = static_cast<double>(c.filters) * k;
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (std::size_t k = 0; k < s.weight_size; ++k) params_[s.weight_offset + k] = static_cast<T>(dist(rng));
      for (std::size_t k = 0; k < s.bias_size; ++k) params_[s.bias_offset + k] = T{0};
    }
    optimizer_ = {};
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return slots_.empty() ? input_shape_ : slots_.back().out; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Shape& layer_output_shape(std::size_t i) const { return slots_.at(i).out; }

  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<T> params() noexcept { return params_; }
  std::span<const T> params() const noexcept { return params_; }

  AdamState<T>& optimizer_state() noexcept { return optimizer_; }
  const AdamState<T>& optimizer_state() const noexcept { return optimizer_; }

  /// Free-form key/value annotations carried through serialization.
  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// Runs the batch (shape {N, input_shape...}) through every layer. Dropout
  /// is active only in train mode, which then requires an rng.
  Tensor<T> forward(const Tensor<T>& batch, bool train_mode = false, Rng* rng = nullptr) const {
    check_batch(batch);
    Tensor<T> current = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      current = apply(i, current, train_mode, rng, nullptr);
    }
    return current;
  }

  Trace<T> trace(const Tensor<T>& batch, bool train_mode = false, Rng* rng = nullptr) const {
    check_batch(batch);
    Trace<T> tr;
    tr.activations.reserve(layers_.size() + 1);
    tr.dropout_masks.resize(layers_.size());
    tr.activations.push_back(batch);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      tr.activations.push_back(apply(i, tr.activations.back(), train_mode, rng, &tr.dropout_masks[i]));
    }
    return tr;
  }

  /// Back-propagates `grad` (gradient w.r.t. the output of layer `end - 1`,
  /// i.e. the input of layer `end`) down to the network input. Pass
  /// end = layer_count() to start from the network output.
  Gradients<T> backward(const Trace<T>& tr, Tensor<T> grad, std::size_t end,
                        GradRequest request = {}) const {
    if (end > layers_.size()) throw ConfigError("backward start layer out of range");
    if (tr.activations.size() != layers_.size() + 1) throw ConfigError("trace does not belong to this network");
    if (grad.shape() != tr.activations[end].shape()) {
      throw ShapeError("gradient shape " + shape_string(grad.shape()) + " does not match activation " +
                       shape_string(tr.activations[end].shape()));
    }
    Gradients<T> out;
    if (request.params) out.params.assign(params_.size(), T{0});
    for (std::size_t i = end; i-- > 0;) {
      const bool need_input = request.input || i > 0;
      if (!need_input && !(request.params && slots_[i].weight_size)) break;
      grad = back(i, tr, grad, request.params ? &out.params : nullptr, need_input);
      if (!need_input) break;
    }
    if (request.input) out.input = std::move(grad);
    return out;
  }

 private:
  struct Slot {
    Shape in, out;
    std::size_t weight_offset = 0, weight_size = 0, bias_offset = 0, bias_size = 0;
  };

  void check_batch(const Tensor<T>& batch) const {
    if (batch.rank() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1)) {
      throw ShapeError("input batch " + shape_string(batch.shape()) + " does not match network input " +
                       shape_string(input_shape_));
    }
  }

  static Shape batched(std::size_t n, const Shape& s) {
    Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  detail::ConvGeometry geometry(std::size_t i) const {
    const auto& c = std::get<Conv2D>(layers_[i]);
    const Shape& in = slots_[i].in;
    return {in[0], in[1], in[2], c.filters, c.kernel_rows, c.kernel_cols, in[1] - c.kernel_rows + 1,
            (c.kernel_cols - 1) / 2};
  }

  Tensor<T> apply(std::size_t i, const Tensor<T>& in, bool train_mode, Rng* rng, std::vector<T>* mask) const {
    const std::size_t n = in.dim(0);
    const Slot& s = slots_[i];
    Tensor<T> out(batched(n, s.out));
    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, Dense>) {
            detail::CMapMat<T> x(in.data(), n, s.in[0]);
            detail::CMapMat<T> w(params_.data() + s.weight_offset, layer.units, s.in[0]);
            detail::CMapRow<T> b(params_.data() + s.bias_offset, layer.units);
            detail::MapMat<T> y(out.data(), n, layer.units);
            y.noalias() = x * w.transpose();
            y.rowwise() += b;
          } else if constexpr (std::is_same_v<L, Conv2D>) {
            const auto g = geometry(i);
            std::vector<T> cols(g.patch() * g.out_positions());
            detail::CMapMat<T> w(params_.data() + s.weight_offset, g.filters, g.patch());
            detail::CMapMat<T> c(cols.data(), g.patch(), g.out_positions());
            for (std::size_t k = 0; k < n; ++k) {
              detail::im2col(in.row(k).data(), g, cols.data());
              detail::MapMat<T> y(out.row(k).data(), g.filters, g.out_positions());
              y.noalias() = w * c;
              for (std::size_t f = 0; f < g.filters; ++f) y.row(f).array() += params_[s.bias_offset + f];
            }
          } else if constexpr (std::is_same_v<L, Relu>) {
            for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > T{0} ? in[k] : T{0};
          } else if constexpr (std::is_same_v<L, Dropout>) {
            if (train_mode && layer.rate > 0.0) {
              if (!rng) throw ConfigError("dropout in train mode needs an rng");
              std::vector<T> m(in.size());
              std::uniform_real_distribution<double> u(0.0, 1.0);
              const T keep = static_cast<T>(1.0 / (1.0 - layer.rate));
              for (auto& v : m) v = u(*rng) >= layer.rate ? keep : T{0};
              for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] * m[k];
              if (mask) *mask = std::move(m);
            } else {
              std::copy(in.values().begin(), in.values().end(), out.values().begin());
            }
          } else if constexpr (std::is_same_v<L, Flatten>) {
            std::copy(in.values().begin(), in.values().end(), out.values().begin());
          } else if constexpr (std::is_same_v<L, Softmax>) {
            const std::size_t width = s.out[0];
            for (std::size_t k = 0; k < n; ++k) {
              auto src = in.row(k);
              auto dst = out.row(k);
              const T peak = *std::max_element(src.begin(), src.end());
              double total = 0.0;
              for (std::size_t j = 0; j < width; ++j) {
                dst[j] = std::exp(src[j] - peak);
                total += dst[j];
              }
              for (std::size_t j = 0; j < width; ++j) dst[j] = static_cast<T>(dst[j] / total);
            }
          } else if constexpr (std::is_same_v<L, Sigmoid>) {
            for (std::size_t k = 0; k < in.size(); ++k) out[k] = sigmoid(in[k]);
          }
        },
        layers_[i]);
    if (!out.all_finite()) throw NumericError("non-finite activation", static_cast<std::ptrdiff_t>(i));
    return out;
  }

  Tensor<T> back(std::size_t i, const Trace<T>& tr, const Tensor<T>& grad, std::vector<T>* pgrad,
                 bool need_input) const {
    const Tensor<T>& in = tr.activations[i];
    const Tensor<T>& out = tr.activations[i + 1];
    const std::size_t n = in.dim(0);
    const Slot& s = slots_[i];
    Tensor<T> dx;
    if (need_input) dx = Tensor<T>(in.shape());
    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, Dense>) {
            detail::CMapMat<T> x(in.data(), n, s.in[0]);
            detail::CMapMat<T> w(params_.data() + s.weight_offset, layer.units, s.in[0]);
            detail::CMapMat<T> dy(grad.data(), n, layer.units);
            if (pgrad) {
              detail::MapMat<T> dw(pgrad->data() + s.weight_offset, layer.units, s.in[0]);
              detail::MapRow<T> db(pgrad->data() + s.bias_offset, layer.units);
              dw.noalias() += dy.transpose() * x;
              // Plain loops: Eigen reductions vectorize differently depending
              // on buffer alignment, which would make results run-dependent.
              for (std::size_t r = 0; r < n; ++r)
                for (std::size_t u = 0; u < layer.units; ++u) db[u] += dy(r, u);
            }
            if (need_input) {
              detail::MapMat<T> d(dx.data(), n, s.in[0]);
              d.noalias() = dy * w;
            }
          } else if constexpr (std::is_same_v<L, Conv2D>) {
            const auto g = geometry(i);
            std::vector<T> cols(g.patch() * g.out_positions());
            std::vector<T> dcols(need_input ? cols.size() : 0);
            detail::CMapMat<T> w(params_.data() + s.weight_offset, g.filters, g.patch());
            for (std::size_t k = 0; k < n; ++k) {
              detail::CMapMat<T> dy(grad.row(k).data(), g.filters, g.out_positions());
              if (pgrad) {
                detail::im2col(in.row(k).data(), g, cols.data());
                detail::CMapMat<T> c(cols.data(), g.patch(), g.out_positions());
                detail::MapMat<T> dw(pgrad->data() + s.weight_offset, g.filters, g.patch());
                dw.noalias() += dy * c.transpose();
                for (std::size_t f = 0; f < g.filters; ++f) {
                  T total{0};
                  for (std::size_t q = 0; q < g.out_positions(); ++q) total += dy(f, q);
                  (*pgrad)[s.bias_offset + f] += total;
                }
              }
              if (need_input) {
                detail::MapMat<T> dc(dcols.data(), g.patch(), g.out_positions());
                dc.noalias() = w.transpose() * dy;
                detail::col2im_add(dcols.data(), g, dx.row(k).data());
              }
            }
          } else if constexpr (std::is_same_v<L, Relu>) {
            if (need_input) {
              for (std::size_t k = 0; k < in.size(); ++k) dx[k] = in[k] > T{0} ? grad[k] : T{0};
            }
          } else if constexpr (std::is_same_v<L, Dropout>) {
            if (need_input) {
              const auto& m = tr.dropout_masks[i];
              for (std::size_t k = 0; k < in.size(); ++k) dx[k] = m.empty() ? grad[k] : grad[k] * m[k];
            }
          } else if constexpr (std::is_same_v<L, Flatten>) {
            if (need_input) std::copy(grad.values().begin(), grad.values().end(), dx.values().begin());
          } else if constexpr (std::is_same_v<L, Softmax>) {
            if (need_input) {
              const std::size_t width = s.out[0];
              for (std::size_t k = 0; k < n; ++k) {
                auto y = out.row(k);
                auto dy = grad.row(k);
                double dot = 0.0;
                for (std::size_t j = 0; j < width; ++j) dot += static_cast<double>(dy[j]) * y[j];
                auto d = dx.row(k);
                for (std::size_t j = 0; j < width; ++j) d[j] = static_cast<T>(y[j] * (dy[j] - dot));
              }
            }
          } else if constexpr (std::is_same_v<L, Sigmoid>) {
            if (need_input) {
              for (std::size_t k = 0; k < in.size(); ++k) dx[k] = grad[k] * out[k] * (T{1} - out[k]);
            }
          }
        },
        layers_[i]);
    return dx;
  }

  static T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
  }

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Slot> slots_;
  std::vector<T> params_;
  AdamState<T> optimizer_;
  std::map<std::string, std::string> metadata_;
};

/// Same architecture and parameters, converted to another scalar type.
template <typename To, typename From>
Network<To> cast_network(const Network<From>& net) {
  Network<To> out(net.input_shape(), net.layers());
  auto src = net.params();
  auto dst = out.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  out.metadata() = net.metadata();
  return out;
}

}  // namespace rfadv::nn
