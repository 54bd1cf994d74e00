#pragma once

// Synthetic modulation datasets with the RML2016.10a class table, used as a
// desk-scale stand-in for the public dataset.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rfadv/channel/channel.hpp"
#include "rfadv/error.hpp"
#include "rfadv/rng.hpp"
#include "rfadv/signal/dataset.hpp"

namespace rfadv::signal {

/// RML2016.10a class names in the converter's (lexicographic) order.
inline const std::vector<std::string>& rml_classes() {
  static const std::vector<std::string> names{"8PSK", "AM-DSB", "AM-SSB", "BPSK", "CPFSK", "GFSK",
                                              "PAM4", "QAM16", "QAM64", "QPSK", "WBFM"};
  return names;
}

/// Maps accepted spellings ("16QAM", "qpsk") to the canonical table entry.
inline std::string canonical_class(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "16QAM") up = "QAM16";
  if (up == "64QAM") up = "QAM64";
  for (const auto& c : rml_classes()) {
    if (c == up) return c;
  }
  throw ConfigError("unsupported modulation class '" + name + "'");
}

enum class TxChannel { none, rayleigh_flat_scalar };

struct SynthSpec {
  std::vector<std::string> classes = rml_classes();
  std::size_t frames_per_class = 100;
  std::size_t samples = 128;             // p
  std::size_t samples_per_symbol = 8;
  double snr_db = 10.0;                  // +inf disables noise
  double rolloff = 0.35;
  TxChannel tx_channel = TxChannel::none;
  std::uint64_t seed = 1;

  void validate() const {
    if (classes.empty()) throw ConfigError("synthesis needs at least one class");
    if (frames_per_class < 1) throw ConfigError("frames_per_class must be >= 1");
    if (samples < 1) throw ConfigError("samples per frame must be >= 1");
    if (samples_per_symbol < 1) throw ConfigError("samples_per_symbol must be >= 1");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) throw ConfigError("snr_db must be finite or +inf");
    if (!(rolloff > 0.0 && rolloff <= 1.0)) throw ConfigError("rolloff must lie in (0, 1]");
  }
};

namespace detail {

using cd = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;

/// Root-raised-cosine taps spanning `span` symbols, unit energy.
inline std::vector<double> rrc_taps(std::size_t sps, double beta, std::size_t span = 8) {
  const std::size_t n = span * sps + 1;
  std::vector<double> h(n);
  const double mid = static_cast<double>(n - 1) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) - mid) / static_cast<double>(sps);
    if (std::abs(t) < 1e-12) {
      h[i] = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
      h[i] = beta / std::sqrt(2.0) *
             ((1 + 2 / kPi) * std::sin(kPi / (4 * beta)) + (1 - 2 / kPi) * std::cos(kPi / (4 * beta)));
    } else {
      h[i] = (std::sin(kPi * t * (1 - beta)) + 4 * beta * t * std::cos(kPi * t * (1 + beta))) /
             (kPi * t * (1 - std::pow(4 * beta * t, 2)));
    }
  }
  double e = 0;
  for (double v : h) e += v * v;
  for (double& v : h) v /= std::sqrt(e);
  return h;
}

inline std::vector<cd> constellation(const std::string& cls) {
  std::vector<cd> pts;
  if (cls == "BPSK") return {1.0, -1.0};
  if (cls == "QPSK") {
    for (int k = 0; k < 4; ++k) pts.push_back(std::polar(1.0, kPi / 4 + k * kPi / 2));
    return pts;
  }
  if (cls == "8PSK") {
    for (int k = 0; k < 8; ++k) pts.push_back(std::polar(1.0, k * kPi / 4));
    return pts;
  }
  if (cls == "PAM4") return {-3.0, -1.0, 1.0, 3.0};
  const int side = cls == "QAM16" ? 4 : 8;
  for (int i = 0; i < side; ++i)
    for (int q = 0; q < side; ++q) pts.push_back({2.0 * i - (side - 1), 2.0 * q - (side - 1)});
  return pts;
}

/// Linear modulation: random symbols, RRC pulse shaping (none at 1 sample/symbol).
inline std::vector<cd> linear_modulation(const std::string& cls, const SynthSpec& spec, Rng& rng) {
  const auto points = constellation(cls);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  const std::size_t sps = spec.samples_per_symbol;
  if (sps == 1) {
    std::vector<cd> out(spec.samples);
    for (auto& v : out) v = points[pick(rng)];
    return out;
  }
  const auto taps = rrc_taps(sps, spec.rolloff);
  const std::size_t delay = taps.size() - 1;
  const std::size_t total = spec.samples + 2 * delay;
  std::vector<cd> upsampled(total, 0.0);
  for (std::size_t i = 0; i < total; i += sps) upsampled[i] = points[pick(rng)];
  std::vector<cd> out(spec.samples);
  for (std::size_t n = 0; n < spec.samples; ++n) {
    cd acc = 0.0;
    const std::size_t at = n + delay;
    for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * upsampled[at - k];
    out[n] = acc;
  }
  return out;
}

/// Binary continuous-phase FSK with modulation index 0.5; GFSK adds a Gaussian
/// frequency pulse with BT = 0.35.
inline std::vector<cd> fsk(bool gaussian, const SynthSpec& spec, Rng& rng) {
  const std::size_t sps = spec.samples_per_symbol;
  const std::size_t guard = 4 * sps;
  std::vector<double> freq(spec.samples + 2 * guard);
  std::bernoulli_distribution bit(0.5);
  for (std::size_t i = 0; i < freq.size(); i += sps) {
    const double sym = bit(rng) ? 1.0 : -1.0;
    for (std::size_t k = i; k < std::min(i + sps, freq.size()); ++k) freq[k] = sym;
  }
  if (gaussian && sps > 1) {
    const double bt = 0.35;
    const std::size_t half = 2 * sps;
    std::vector<double> g(2 * half + 1);
    double total = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = (static_cast<double>(i) - static_cast<double>(half)) / static_cast<double>(sps);
      g[i] = std::exp(-2.0 * kPi * kPi * bt * bt * t * t / std::log(2.0));
      total += g[i];
    }
    std::vector<double> smoothed(freq.size(), 0.0);
    for (std::size_t n = half; n + half < freq.size(); ++n) {
      double acc = 0;
      for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * freq[n + half - k];
      smoothed[n] = acc / total;
    }
    freq = std::move(smoothed);
  }
  std::uniform_real_distribution<double> phase0(0.0, 2 * kPi);
  double phase = phase0(rng);
  std::vector<cd> out(spec.samples);
  for (std::size_t n = 0; n < spec.samples; ++n) {
    phase += kPi * 0.5 * freq[n + guard] / static_cast<double>(sps);
    out[n] = std::polar(1.0, phase);
  }
  return out;
}

/// Analog modulations driven by a three-tone random message.
inline std::vector<cd> analog(const std::string& cls, const SynthSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> f(0.005, 0.05), a(0.3, 1.0), ph(0.0, 2 * kPi);
  double fk[3], ak[3], pk[3], norm = 0;
  for (int k = 0; k < 3; ++k) {
    fk[k] = f(rng);
    ak[k] = a(rng);
    pk[k] = ph(rng);
    norm += ak[k];
  }
  std::vector<cd> out(spec.samples);
  double integral = 0;
  for (std::size_t n = 0; n < spec.samples; ++n) {
    double m = 0;
    cd analytic = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double arg = 2 * kPi * fk[k] * static_cast<double>(n) + pk[k];
      m += ak[k] / norm * std::cos(arg);
      analytic += ak[k] / norm * std::polar(1.0, arg);
    }
    if (cls == "AM-DSB") {
      out[n] = 1.0 + 0.5 * m;
    } else if (cls == "AM-SSB") {
      out[n] = analytic;
    } else {  // WBFM
      integral += m;
      out[n] = std::polar(1.0, 2 * kPi * 0.05 * integral);
    }
  }
  return out;
}

inline std::vector<cd> modulate(const std::string& cls, const SynthSpec& spec, Rng& rng) {
  if (cls == "CPFSK") return fsk(false, spec, rng);
  if (cls == "GFSK") return fsk(true, spec, rng);
  if (cls == "AM-DSB" || cls == "AM-SSB" || cls == "WBFM") return analog(cls, spec, rng);
  return linear_modulation(cls, spec, rng);
}

}  // namespace detail

/// Builds frames_per_class frames per class: unit-average-power baseband
/// frame, optional per-frame complex gain, then AWGN at snr_db. Signal, gain
/// and noise use separate rng streams, so a noiseless spec with the same seed
/// yields the exact noise-free counterpart of every frame.
inline LabeledDataset synthesize(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::string> names;
  for (const auto& c : spec.classes) names.push_back(canonical_class(c));
  LabeledDataset ds(spec.samples, names, spec.snr_db);
  const bool noisy = std::isfinite(spec.snr_db);
  const channel::NoiseSpec noise{noisy ? channel::noise_power_for_snr(spec.snr_db) : 1.0, 0.0};
  IQFrame frame(spec.samples);
  std::uint64_t index = 0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    for (std::size_t k = 0; k < spec.frames_per_class; ++k, ++index) {
      Rng signal_rng = make_rng(spec.seed, "synth-signal", index);
      auto samples = detail::modulate(names[c], spec, signal_rng);
      double power = 0;
      for (const auto& v : samples) power += std::norm(v);
      const double scale = 1.0 / std::sqrt(power / static_cast<double>(samples.size()));
      std::complex<double> gain = 1.0;
      if (spec.tx_channel == TxChannel::rayleigh_flat_scalar) {
        Rng gain_rng = make_rng(spec.seed, "synth-gain", index);
        std::normal_distribution<double> g(0.0, std::sqrt(0.5));
        gain = {g(gain_rng), g(gain_rng)};
      }
      for (std::size_t i = 0; i < spec.samples; ++i) frame.set(i, samples[i] * scale * gain);
      if (noisy) {
        Rng noise_rng = make_rng(spec.seed, "synth-noise", index);
        channel::add_awgn_inplace(frame.values(), noise, noise_rng);
      }
      ds.add(frame, static_cast<std::uint16_t>(c));
    }
  }
  return ds;
}

}  // namespace rfadv::signal
