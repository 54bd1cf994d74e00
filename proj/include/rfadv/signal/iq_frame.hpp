#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "rfadv/error.hpp"

namespace rfadv {

/// p complex samples stored as a 2 x p real array: row 0 holds I, row 1 holds Q.
/// The same layout is used for perturbations and for classifier inputs.
class IQFrame {
 public:
  IQFrame() = default;
  explicit IQFrame(std::size_t samples) : iq_(2 * samples, 0.0f) {}
  explicit IQFrame(std::vector<float> iq) : iq_(std::move(iq)) {
    if (iq_.size() % 2 != 0) throw ShapeError("I/Q storage needs an even number of values");
  }

  std::size_t length() const noexcept { return iq_.size() / 2; }
  std::span<float> values() noexcept { return iq_; }
  std::span<const float> values() const noexcept { return iq_; }
  std::span<float> in_phase() noexcept { return std::span<float>(iq_).first(length()); }
  std::span<float> quadrature() noexcept { return std::span<float>(iq_).subspan(length()); }

  std::complex<double> sample(std::size_t i) const { return {iq_[i], iq_[length() + i]}; }
  void set(std::size_t i, std::complex<double> v) {
    iq_[i] = static_cast<float>(v.real());
    iq_[length() + i] = static_cast<float>(v.imag());
  }

  friend bool operator==(const IQFrame&, const IQFrame&) = default;

 private:
  std::vector<float> iq_;
};

/// Squared l2 norm, accumulated in double.
inline double energy(std::span<const float> iq) {
  double total = 0.0;
  for (float v : iq) total += static_cast<double>(v) * v;
  return total;
}

inline double energy(const IQFrame& frame) { return energy(frame.values()); }

/// Mean power per complex sample.
inline double mean_power(std::span<const float> iq) {
  return iq.empty() ? 0.0 : energy(iq) / static_cast<double>(iq.size() / 2);
}

}  // namespace rfadv
