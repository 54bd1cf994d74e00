#pragma once

// Attacker -> receiver channel: Rayleigh fast fading x lognormal shadowing x
// deterministic path loss, acting on I/Q frames as a diagonal matrix.

#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include "rfadv/error.hpp"
#include "rfadv/rng.hpp"
#include "rfadv/signal/iq_frame.hpp"

namespace rfadv::channel {

enum class Coherence { per_sample, per_frame };

inline Coherence parse_coherence(const std::string& s) {
  if (s == "per_sample") return Coherence::per_sample;
  if (s == "per_frame") return Coherence::per_frame;
  throw ConfigError("unknown channel coherence '" + s + "' (expected per_sample or per_frame)");
}

inline std::string to_string(Coherence c) { return c == Coherence::per_sample ? "per_sample" : "per_frame"; }

/// Distribution of the diagonal channel coefficients.
///
/// rayleigh_scale is the std of each real component of the complex Gaussian;
/// 0 switches fading off (deterministic unit coefficient). shadowing_sigma_db
/// of 0 switches shadowing off. Path gain is reference_gain * distance^-path_exponent.
struct ChannelDistribution {
  double rayleigh_scale = 0.7071067811865476;
  double shadowing_sigma_db = 4.0;
  double path_exponent = 2.0;
  double distance = 1.0;
  double reference_gain = 1.0;
  Coherence coherence = Coherence::per_sample;

  void validate() const {
    if (!(rayleigh_scale >= 0.0) || !std::isfinite(rayleigh_scale)) throw ConfigError("rayleigh_scale must be >= 0");
    if (!(shadowing_sigma_db >= 0.0) || !std::isfinite(shadowing_sigma_db)) throw ConfigError("shadowing_sigma_db must be >= 0");
    if (!(path_exponent >= 0.0)) throw ConfigError("path_exponent must be >= 0");
    if (!(distance > 0.0)) throw ConfigError("distance must be > 0");
    if (!(reference_gain > 0.0)) throw ConfigError("reference_gain must be > 0");
  }

  double path_gain() const { return reference_gain * std::pow(distance, -path_exponent); }

  /// E|h|^2 in closed form: 2 sigma^2 * E[10^(X/10)] * path gain, X ~ N(0, sigma_db^2).
  double expected_power_gain() const {
    const double fading = rayleigh_scale > 0.0 ? 2.0 * rayleigh_scale * rayleigh_scale : 1.0;
    const double s = shadowing_sigma_db * std::log(10.0) / 10.0;
    return fading * std::exp(0.5 * s * s) * path_gain();
  }
};

/// Diagonal of H: one complex coefficient per sample.
struct ChannelRealization {
  std::vector<std::complex<double>> coeffs;

  std::size_t length() const noexcept { return coeffs.size(); }

  static ChannelRealization identity(std::size_t p) { return {std::vector<std::complex<double>>(p, 1.0)}; }
};

struct NoiseSpec {
  double noise_power = 0.1;  // P_n per complex sample (linear)
  double mean = 0.0;         // per real component

  void validate() const {
    if (!(noise_power > 0.0) || !std::isfinite(noise_power)) throw ConfigError("noise_power must be > 0");
  }
};

/// Noise power that gives `snr_db` against unit average signal power.
inline double noise_power_for_snr(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

namespace detail {

inline std::complex<double> draw_coefficient(const ChannelDistribution& dist, Rng& rng) {
  std::complex<double> h = 1.0;
  if (dist.rayleigh_scale > 0.0) {
    std::normal_distribution<double> g(0.0, dist.rayleigh_scale);
    const double re = g(rng);
    const double im = g(rng);
    h = {re, im};
  }
  double gain = dist.path_gain();
  if (dist.shadowing_sigma_db > 0.0) {
    std::normal_distribution<double> x(0.0, dist.shadowing_sigma_db);
    gain *= std::pow(10.0, x(rng) / 10.0);
  }
  return h * std::sqrt(gain);
}

}  // namespace detail

inline ChannelRealization sample_channel(const ChannelDistribution& dist, std::size_t p, Rng& rng) {
  if (p == 0) throw ConfigError("channel length must be >= 1");
  dist.validate();
  ChannelRealization out;
  out.coeffs.resize(p);
  if (dist.coherence == Coherence::per_frame) {
    const auto h = detail::draw_coefficient(dist, rng);
    std::fill(out.coeffs.begin(), out.coeffs.end(), h);
  } else {
    for (auto& h : out.coeffs) h = detail::draw_coefficient(dist, rng);
  }
  return out;
}

/// Elementwise complex product H * delta written into `out` (same layout, may alias `delta`).
inline void apply_channel(const ChannelRealization& h, std::span<const float> delta, std::span<float> out) {
  const std::size_t p = delta.size() / 2;
  if (h.length() != p || delta.size() != 2 * p || out.size() != delta.size()) {
    throw ShapeError("channel has " + std::to_string(h.length()) + " coefficients for a frame of " +
                     std::to_string(p) + " samples");
  }
  for (std::size_t i = 0; i < p; ++i) {
    const double re = delta[i];
    const double im = delta[p + i];
    const auto c = h.coeffs[i];
    out[i] = static_cast<float>(c.real() * re - c.imag() * im);
    out[p + i] = static_cast<float>(c.real() * im + c.imag() * re);
  }
}

inline IQFrame apply_channel(const ChannelRealization& h, const IQFrame& delta) {
  IQFrame out(delta.length());
  apply_channel(h, delta.values(), out.values());
  return out;
}

/// Adds N(mean, noise_power / 2) to every real component in place.
inline void add_awgn_inplace(std::span<float> frame, const NoiseSpec& noise, Rng& rng) {
  noise.validate();
  std::normal_distribution<double> n(noise.mean, std::sqrt(noise.noise_power / 2.0));
  for (auto& v : frame) v = static_cast<float>(v + n(rng));
}

inline IQFrame add_awgn(IQFrame frame, const NoiseSpec& noise, Rng& rng) {
  add_awgn_inplace(frame.values(), noise, rng);
  return frame;
}

/// 10 log10(P_rx / P_n).
inline double pnr_db(double received_perturbation_power, double noise_power) {
  if (!(received_perturbation_power > 0.0) || !(noise_power > 0.0)) {
    throw DomainError("PNR needs positive perturbation and noise powers");
  }
  return 10.0 * std::log10(received_perturbation_power / noise_power);
}

/// Transmit budget (total ||delta||^2 per frame) whose expected received
/// power per sample, E|h|^2 * p_max / p, sits at `target_pnr_db` above P_n.
inline double budget_for_pnr(double target_pnr_db, double noise_power, std::size_t p, double expected_gain) {
  if (!(noise_power > 0.0) || !(expected_gain > 0.0)) throw DomainError("budget needs positive noise power and gain");
  return std::pow(10.0, target_pnr_db / 10.0) * noise_power * static_cast<double>(p) / expected_gain;
}

}  // namespace rfadv::channel
