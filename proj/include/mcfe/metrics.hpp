#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "mcfe/errors.hpp"

namespace mcfe {

inline constexpr double kSiSnrCapDb = 60.0;

/// Scale-invariant SNR in dB: 10 log10(|a s|^2 / |x - a s|^2), a = <x,s>/|s|^2,
/// clamped to [-60, 60].
inline double si_snr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw ShapeError("si-snr: length mismatch");
  double ref_energy = 0, dot = 0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    ref_energy += reference[n] * reference[n];
    dot += estimate[n] * reference[n];
  }
  if (!(ref_energy > 0)) throw Error("si-snr: zero reference");
  const double alpha = dot / ref_energy;
  double target = 0, error = 0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    const double s = alpha * reference[n];
    const double e = estimate[n] - s;
    target += s * s;
    error += e * e;
  }
  if (error <= target * 1e-12) return kSiSnrCapDb;
  if (target <= 0) return -kSiSnrCapDb;
  return std::clamp(10.0 * std::log10(target / error), -kSiSnrCapDb, kSiSnrCapDb);
}

}  // namespace mcfe
