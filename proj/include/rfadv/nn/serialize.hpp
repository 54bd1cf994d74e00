#pragma once

// RFNN network files:
//   "RFNN" | u16 version | u32 length + architecture text | u64 param count |
//   param_count x float32 (little endian) | u32 CRC32 of all preceding bytes.
// The architecture text holds one "input d0 d1 ..." line, one line per layer
// and optional "meta key=value" lines.

#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>

#include "rfadv/binary_io.hpp"
#include "rfadv/nn/network.hpp"

namespace rfadv::nn {

inline constexpr std::string_view kNetworkMagic = "RFNN";
inline constexpr std::uint16_t kNetworkVersion = 1;

template <typename T>
std::string architecture_text(const Network<T>& net) {
  std::ostringstream os;
  os << "input";
  for (std::size_t d : net.input_shape()) os << ' ' << d;
  os << '\n';
  for (const auto& layer : net.layers()) os << describe(layer) << '\n';
  for (const auto& [key, value] : net.metadata()) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ConfigError("metadata keys may not contain '=' or newlines: " + key);
    }
    os << "meta " << key << '=' << value << '\n';
  }
  return os.str();
}

template <typename T>
std::string serialize(const Network<T>& net) {
  io::ByteWriter w;
  w.raw(kNetworkMagic);
  w.u16(kNetworkVersion);
  w.str32(architecture_text(net));
  w.u64(net.param_count());
  for (T v : net.params()) w.f32(static_cast<float>(v));
  w.seal();
  return w.take();
}

/// Inverse of serialize(); throws FormatError on any corruption, never returns a partial network.
inline Network<float> deserialize(std::string_view bytes) {
  io::ByteReader r(bytes, "network file");
  if (bytes.substr(0, 4) != kNetworkMagic) r.fail("bad magic");
  r.verify_crc();
  r.raw(4);
  if (const auto version = r.u16(); version != kNetworkVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  const std::string text = r.str32();

  Shape input;
  std::vector<LayerSpec> layers;
  std::map<std::string, std::string> meta;
  std::istringstream is(text);
  std::string line;
  bool have_input = false;
  try {
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (line.rfind("input", 0) == 0) {
        std::istringstream ls(line.substr(5));
        std::size_t d;
        while (ls >> d) input.push_back(d);
        have_input = true;
      } else if (line.rfind("meta ", 0) == 0) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) r.fail("malformed metadata line");
        meta[line.substr(5, eq - 5)] = line.substr(eq + 1);
      } else {
        layers.push_back(parse_layer(line));
      }
    }
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  if (!have_input) r.fail("missing input shape");

  Network<float> net = [&] {
    try {
      return Network<float>(input, layers);
    } catch (const ConfigError& e) {
      r.fail(std::string("inconsistent architecture: ") + e.what());
    }
  }();
  if (r.u64() != net.param_count()) r.fail("parameter count does not match architecture");
  r.f32s(net.params());
  r.expect_end();
  net.metadata() = std::move(meta);
  return net;
}

template <typename T>
void save_network(const Network<T>& net, const std::filesystem::path& path) {
  io::write_file(path, serialize(net));
}

inline Network<float> load_network(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

}  // namespace rfadv::nn
