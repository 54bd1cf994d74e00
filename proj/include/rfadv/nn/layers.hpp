#pragma once

#include <cstddef>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "rfadv/error.hpp"
#include "rfadv/nn/tensor.hpp"

namespace rfadv::nn {

struct Dense {
  std::size_t units = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};

/// 2-D cross-correlation over a (channels, rows, cols) input. Stride 1; the
/// column (time) axis is zero-padded to keep its length, rows are unpadded.
struct Conv2D {
  std::size_t filters = 0;
  std::size_t kernel_rows = 1;
  std::size_t kernel_cols = 1;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};
struct Dropout {
  double rate = 0.5;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};
struct Sigmoid {
  friend bool operator==(const Sigmoid&, const Sigmoid&) = default;
};

using LayerSpec = std::variant<Dense, Conv2D, Relu, Dropout, Flatten, Softmax, Sigmoid>;

inline bool has_params(const LayerSpec& layer) {
  return std::holds_alternative<Dense>(layer) || std::holds_alternative<Conv2D>(layer);
}

/// Output shape of one layer (per example, no batch axis).
inline Shape output_shape(const LayerSpec& layer, const Shape& in) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Dense>) {
          if (in.size() != 1) throw ShapeError("dense layer needs a flat input, got " + shape_string(in));
          if (l.units == 0) throw ConfigError("dense layer needs at least one unit");
          return {l.units};
        } else if constexpr (std::is_same_v<L, Conv2D>) {
          if (in.size() != 3) throw ShapeError("conv2d needs a CxHxW input, got " + shape_string(in));
          if (l.filters == 0 || l.kernel_rows == 0 || l.kernel_cols == 0) {
            throw ConfigError("conv2d filters and kernel dims must be positive");
          }
          if (l.kernel_rows > in[1]) throw ShapeError("conv2d kernel taller than input " + shape_string(in));
          return {l.filters, in[1] - l.kernel_rows + 1, in[2]};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return {shape_size(in)};
        } else if constexpr (std::is_same_v<L, Dropout>) {
          if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
          return in;
        } else if constexpr (std::is_same_v<L, Softmax>) {
          if (in.size() != 1) throw ShapeError("softmax needs a flat input, got " + shape_string(in));
          return in;
        } else {
          return in;
        }
      },
      layer);
}

inline std::string describe(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using L = std::decay_t<decltype(l)>;
        std::ostringstream os;
        os.precision(17);
        if constexpr (std::is_same_v<L, Dense>) os << "dense " << l.units;
        else if constexpr (std::is_same_v<L, Conv2D>) os << "conv2d " << l.filters << ' ' << l.kernel_rows << ' ' << l.kernel_cols;
        else if constexpr (std::is_same_v<L, Relu>) os << "relu";
        else if constexpr (std::is_same_v<L, Dropout>) os << "dropout " << l.rate;
        else if constexpr (std::is_same_v<L, Flatten>) os << "flatten";
        else if constexpr (std::is_same_v<L, Softmax>) os << "softmax";
        else os << "sigmoid";
        return os.str();
      },
      layer);
}

/// Parses one line produced by describe(), e.g. "conv2d 32 1 3".
inline LayerSpec parse_layer(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  auto read = [&](auto& value) {
    if (!(is >> value)) throw ConfigError("malformed layer descriptor: '" + line + "'");
  };
  LayerSpec out;
  if (kind == "dense") {
    Dense d;
    read(d.units);
    out = d;
  } else if (kind == "conv2d") {
    Conv2D c;
    read(c.filters);
    read(c.kernel_rows);
    read(c.kernel_cols);
    out = c;
  } else if (kind == "relu") {
    out = Relu{};
  } else if (kind == "dropout") {
    Dropout d;
    read(d.rate);
    out = d;
  } else if (kind == "flatten") {
    out = Flatten{};
  } else if (kind == "softmax") {
    out = Softmax{};
  } else if (kind == "sigmoid") {
    out = Sigmoid{};
  } else {
    throw ConfigError("unknown layer kind '" + kind + "'");
  }
  std::string extra;
  if (is >> extra) throw ConfigError("malformed layer descriptor: '" + line + "'");
  return out;
}

/// Parses a comma separated layer list such as "dense 128, relu, dense 1, sigmoid".
inline std::vector<LayerSpec> parse_layers(const std::string& text) {
  std::vector<LayerSpec> layers;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t");
    layers.push_back(parse_layer(item.substr(first, last - first + 1)));
  }
  return layers;
}

}  // namespace rfadv::nn
