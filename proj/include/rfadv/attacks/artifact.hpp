#pragma once

// Trained or crafted perturbation sources and the power-budget remapping
// every emitted perturbation goes through.

#include <cmath>
#include <complex>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rfadv/binary_io.hpp"
#include "rfadv/channel/channel.hpp"
#include "rfadv/error.hpp"
#include "rfadv/nn/network.hpp"
#include "rfadv/nn/serialize.hpp"
#include "rfadv/rng.hpp"
#include "rfadv/signal/iq_frame.hpp"

namespace rfadv::attacks {

/// fgm is the per-example white-box baseline: it has no payload and is
/// crafted against the classifier at evaluation time.
enum class AttackKind : std::uint8_t { fgm = 0, uap_fgm = 1, pgm = 2, cdi_gan = 3, mrpp = 4 };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::fgm: return "fgm";
    case AttackKind::uap_fgm: return "uap_fgm";
    case AttackKind::pgm: return "pgm";
    case AttackKind::cdi_gan: return "cdi_gan";
    case AttackKind::mrpp: return "mrpp";
  }
  return "?";
}

inline AttackKind parse_kind(const std::string& s) {
  for (auto k : {AttackKind::fgm, AttackKind::uap_fgm, AttackKind::pgm, AttackKind::cdi_gan, AttackKind::mrpp}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown attack kind '" + s + "'");
}

/// Distribution of generator triggers z: Uniform(low, high)^dim.
struct TriggerSpec {
  std::size_t dim = 64;
  double low = 0.0;
  double high = 1.0;

  void validate() const {
    if (dim < 1) throw ConfigError("trigger dimension must be >= 1");
    if (!(high > low)) throw ConfigError("trigger range must satisfy high > low");
  }

  void draw(std::span<float> out, Rng& rng) const {
    std::uniform_real_distribution<double> u(low, high);
    for (auto& v : out) v = static_cast<float>(u(rng));
  }
};

struct AttackArtifact {
  AttackKind kind = AttackKind::uap_fgm;
  std::size_t samples = 0;  // p
  double p_max = 0.0;       // per-frame ||delta||^2 budget
  channel::NoiseSpec noise;

  std::vector<float> delta;                // uap_fgm: fixed 2p vector
  std::optional<nn::Network<float>> generator;  // pgm, cdi_gan
  TriggerSpec trigger;

  std::shared_ptr<const AttackArtifact> inner;  // mrpp
  std::vector<std::complex<float>> compensation;
  std::size_t fallback_count = 0;

  std::map<std::string, std::string> metadata;

  /// Attacks that model no channel may still be evaluated through one; the
  /// channel-aware kinds must be.
  bool requires_channel() const noexcept { return kind == AttackKind::cdi_gan || kind == AttackKind::mrpp; }

  void validate() const {
    if (samples < 1) throw ConfigError("attack artifact has no frame length");
    if (!(p_max >= 0.0) || !std::isfinite(p_max)) throw ConfigError("p_max must be finite and >= 0");
    switch (kind) {
      case AttackKind::fgm: break;
      case AttackKind::uap_fgm:
        if (delta.size() != 2 * samples) throw ShapeError("uap perturbation has the wrong length");
        break;
      case AttackKind::pgm:
      case AttackKind::cdi_gan:
        if (!generator) throw ConfigError("generator attack without a generator");
        trigger.validate();
        if (generator->input_shape() != nn::Shape{trigger.dim} || generator->output_shape() != nn::Shape{2 * samples}) {
          throw ShapeError("generator maps " + nn::shape_string(generator->input_shape()) + " -> " +
                           nn::shape_string(generator->output_shape()) + ", expected {" + std::to_string(trigger.dim) +
                           "} -> {" + std::to_string(2 * samples) + "}");
        }
        break;
      case AttackKind::mrpp:
        if (!inner) throw ConfigError("mrpp artifact without an inner attack");
        if (inner->kind == AttackKind::fgm || inner->kind == AttackKind::mrpp) {
          throw ConfigError("mrpp wraps uap_fgm, pgm or cdi_gan artifacts only");
        }
        if (compensation.size() != samples || inner->samples != samples) throw ShapeError("mrpp compensation has the wrong length");
        break;
    }
  }
};

// ---------------------------------------------------------------------------
// Power budget

/// Largest scale s <= target such that ||s * v||^2, summed in double over the
/// float results, does not exceed p_max.
inline void scale_within_budget(std::span<float> v, double scale, double p_max) {
  for (int guard = 0; guard < 64; ++guard) {
    double e = 0.0;
    for (float x : v) {
      const float y = static_cast<float>(x * scale);
      e += static_cast<double>(y) * y;
    }
    if (e <= p_max) break;
    scale = std::nextafter(scale * (1.0 - 1e-7), 0.0);
  }
  for (auto& x : v) x = static_cast<float>(x * scale);
}

/// Identity when ||v||^2 <= p_max, otherwise a rescale onto the budget sphere.
inline void remap_power_inplace(std::span<float> v, double p_max) {
  if (!(p_max >= 0.0)) throw ConfigError("p_max must be >= 0");
  const double e = energy(v);
  if (e <= p_max) return;
  scale_within_budget(v, std::sqrt(p_max / e), p_max);
}

inline std::vector<float> remap_power(std::span<const float> raw, double p_max) {
  std::vector<float> out(raw.begin(), raw.end());
  remap_power_inplace(out, p_max);
  return out;
}

/// Rescales a nonzero vector onto ||v||^2 = p_max (never above it).
inline void normalize_to_budget(std::span<float> v, double p_max) {
  const double e = energy(v);
  if (e == 0.0) return;
  scale_within_budget(v, std::sqrt(p_max / e), p_max);
}

// ---------------------------------------------------------------------------
// Sampling

inline void apply_compensation(std::span<const std::complex<float>> c, std::span<float> delta) {
  const std::size_t p = c.size();
  for (std::size_t i = 0; i < p; ++i) {
    const std::complex<double> v = std::complex<double>(c[i]) * std::complex<double>(delta[i], delta[p + i]);
    delta[i] = static_cast<float>(v.real());
    delta[p + i] = static_cast<float>(v.imag());
  }
}

/// Fills one perturbation per rng (row k of `out` from rngs[k]). Each row
/// consumes only its own stream, so results do not depend on how frames are
/// grouped.
inline void draw_perturbations(const AttackArtifact& a, std::span<Rng> rngs, std::span<float> out) {
  const std::size_t width = 2 * a.samples;
  if (out.size() != rngs.size() * width) throw ShapeError("perturbation buffer has the wrong size");
  switch (a.kind) {
    case AttackKind::fgm:
      throw ConfigError("fgm perturbations depend on the input frame; craft them with fgm_no_channel");
    case AttackKind::uap_fgm:
      for (std::size_t k = 0; k < rngs.size(); ++k) std::copy(a.delta.begin(), a.delta.end(), out.begin() + k * width);
      return;
    case AttackKind::pgm:
    case AttackKind::cdi_gan: {
      if (rngs.empty()) return;
      nn::Tensor<float> z({rngs.size(), a.trigger.dim});
      for (std::size_t k = 0; k < rngs.size(); ++k) a.trigger.draw(z.row(k), rngs[k]);
      const auto raw = a.generator->forward(z);
      for (std::size_t k = 0; k < rngs.size(); ++k) {
        auto row = out.subspan(k * width, width);
        std::copy(raw.row(k).begin(), raw.row(k).end(), row.begin());
        remap_power_inplace(row, a.p_max);
      }
      return;
    }
    case AttackKind::mrpp: {
      draw_perturbations(*a.inner, rngs, out);
      const double ratio = a.inner->p_max > 0.0 ? a.p_max / a.inner->p_max : 0.0;
      for (std::size_t k = 0; k < rngs.size(); ++k) {
        auto row = out.subspan(k * width, width);
        if (ratio != 1.0) {
          for (auto& v : row) v = static_cast<float>(v * std::sqrt(ratio));
        }
        apply_compensation(a.compensation, row);
        remap_power_inplace(row, a.p_max);
      }
      return;
    }
  }
}

/// One perturbation per call: the fixed vector for uap kinds, a fresh draw for generators.
inline IQFrame sample_attack(const AttackArtifact& a, Rng& rng) {
  IQFrame out(a.samples);
  draw_perturbations(a, std::span<Rng>(&rng, 1), out.values());
  return out;
}

// ---------------------------------------------------------------------------
// Attack file (RFAT)
//   "RFAT" | u16 version | u8 kind | u32 p | f64 p_max | f64 noise power | f64 noise mean |
//   u32 metadata count + (str16 key, str16 value)* | payload | u32 CRC32
// payload: fgm none; uap_fgm 2p float32; pgm/cdi_gan u32 trigger dim, f64 low,
// f64 high, str32 network blob; mrpp u32 fallback count, p complex float32
// (re, im), str32 inner artifact file.

inline constexpr std::string_view kAttackMagic = "RFAT";
inline constexpr std::uint16_t kAttackVersion = 1;

inline std::string encode_artifact(const AttackArtifact& a) {
  a.validate();
  io::ByteWriter w;
  w.raw(kAttackMagic);
  w.u16(kAttackVersion);
  w.u8(static_cast<std::uint8_t>(a.kind));
  w.u32(static_cast<std::uint32_t>(a.samples));
  w.f64(a.p_max);
  w.f64(a.noise.noise_power);
  w.f64(a.noise.mean);
  w.u32(static_cast<std::uint32_t>(a.metadata.size()));
  for (const auto& [k, v] : a.metadata) {
    w.str16(k);
    w.str16(v);
  }
  switch (a.kind) {
    case AttackKind::fgm: break;
    case AttackKind::uap_fgm: w.f32s(a.delta); break;
    case AttackKind::pgm:
    case AttackKind::cdi_gan:
      w.u32(static_cast<std::uint32_t>(a.trigger.dim));
      w.f64(a.trigger.low);
      w.f64(a.trigger.high);
      w.str32(nn::serialize(*a.generator));
      break;
    case AttackKind::mrpp:
      w.u32(static_cast<std::uint32_t>(a.fallback_count));
      for (auto c : a.compensation) {
        w.f32(c.real());
        w.f32(c.imag());
      }
      w.str32(encode_artifact(*a.inner));
      break;
  }
  w.seal();
  return w.take();
}

inline AttackArtifact decode_artifact(std::string_view bytes) {
  io::ByteReader r(bytes, "attack file");
  if (bytes.substr(0, 4) != kAttackMagic) r.fail("bad magic");
  r.verify_crc();
  r.raw(4);
  if (const auto version = r.u16(); version != kAttackVersion) r.fail("unsupported version " + std::to_string(version));
  AttackArtifact a;
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(AttackKind::mrpp)) r.fail("unknown attack kind " + std::to_string(kind));
  a.kind = static_cast<AttackKind>(kind);
  a.samples = r.u32();
  a.p_max = r.f64();
  a.noise.noise_power = r.f64();
  a.noise.mean = r.f64();
  const auto meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    auto k = r.str16();
    a.metadata[k] = r.str16();
  }
  try {
    switch (a.kind) {
      case AttackKind::fgm: break;
      case AttackKind::uap_fgm:
        a.delta.resize(2 * a.samples);
        r.f32s(a.delta);
        break;
      case AttackKind::pgm:
      case AttackKind::cdi_gan:
        a.trigger.dim = r.u32();
        a.trigger.low = r.f64();
        a.trigger.high = r.f64();
        a.generator = nn::deserialize(r.str32());
        break;
      case AttackKind::mrpp: {
        a.fallback_count = r.u32();
        a.compensation.resize(a.samples);
        for (auto& c : a.compensation) {
          const float re = r.f32();
          c = {re, r.f32()};
        }
        a.inner = std::make_shared<const AttackArtifact>(decode_artifact(r.str32()));
        break;
      }
    }
    r.expect_end();
    a.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  return a;
}

inline void save_artifact(const AttackArtifact& a, const std::filesystem::path& path) {
  io::write_file(path, encode_artifact(a));
}

inline AttackArtifact load_artifact(const std::filesystem::path& path) { return decode_artifact(io::read_file(path)); }

}  // namespace rfadv::attacks
