#pragma once

// MRPP-style transform of a channel-unaware attack. The construction here is
// a phase-alignment stand-in that uses only the channel distribution:
// c_i = conj(m_i) / |m_i| with m_i the mean unit phasor h_i / |h_i| over
// sampled realizations, so that h_i c_i is real-positive on average.

#include <complex>
#include <memory>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/channel/channel.hpp"

namespace rfadv::attacks {

inline constexpr double kMrppFallbackThreshold = 1e-9;

/// Compensation from explicit channel realizations.
inline std::vector<std::complex<float>> mrpp_compensation(std::span<const channel::ChannelRealization> realizations,
                                                          std::size_t* fallbacks = nullptr) {
  if (realizations.empty()) throw ConfigError("mrpp needs at least one channel sample");
  const std::size_t p = realizations.front().length();
  std::vector<std::complex<double>> mean(p, 0.0);
  for (const auto& h : realizations) {
    if (h.length() != p) throw ShapeError("channel realizations differ in length");
    for (std::size_t i = 0; i < p; ++i) {
      const double mag = std::abs(h.coeffs[i]);
      if (mag > 0.0) mean[i] += h.coeffs[i] / mag;
    }
  }
  std::vector<std::complex<float>> c(p);
  std::size_t fallback = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const auto m = mean[i] / static_cast<double>(realizations.size());
    if (std::abs(m) < kMrppFallbackThreshold) {
      c[i] = 1.0f;
      ++fallback;
    } else {
      c[i] = std::complex<float>(std::conj(m) / std::abs(m));
    }
  }
  if (fallbacks) *fallbacks = fallback;
  return c;
}

inline std::vector<std::complex<float>> mrpp_compensation(const channel::ChannelDistribution& dist, std::size_t p,
                                                          std::size_t n_samples, Rng& rng, std::size_t* fallbacks) {
  if (n_samples < 1) throw ConfigError("mrpp needs at least one channel sample");
  std::vector<channel::ChannelRealization> hs;
  hs.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) hs.push_back(channel::sample_channel(dist, p, rng));
  return mrpp_compensation(hs, fallbacks);
}

inline AttackArtifact mrpp_transform(std::shared_ptr<const AttackArtifact> inner, const channel::ChannelDistribution& dist,
                                     std::size_t n_samples, Rng& rng) {
  if (!inner) throw ConfigError("mrpp needs an inner attack");
  inner->validate();
  AttackArtifact a;
  a.kind = AttackKind::mrpp;
  a.samples = inner->samples;
  a.p_max = inner->p_max;
  a.noise = inner->noise;
  a.compensation = mrpp_compensation(dist, a.samples, n_samples, rng, &a.fallback_count);
  a.inner = std::move(inner);
  a.metadata["compensation"] = "phase-alignment stand-in";
  a.metadata["channel_samples"] = std::to_string(n_samples);
  a.metadata["fallback_elements"] = std::to_string(a.fallback_count);
  a.validate();
  return a;
}

/// Received power projected on the transmitted perturbation,
/// sum_i Re(conj(delta_i) * h_i * c_i * delta_i): the part of the received
/// perturbation that adds coherently with the intended one.
inline double coherent_received_power(const channel::ChannelRealization& h, std::span<const std::complex<float>> c,
                                      std::span<const float> delta) {
  const std::size_t p = h.length();
  double total = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const std::complex<double> d(delta[i], delta[p + i]);
    total += std::real(std::conj(d) * h.coeffs[i] * std::complex<double>(c[i]) * d);
  }
  return total;
}

}  // namespace rfadv::attacks
