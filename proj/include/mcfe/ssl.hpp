#pragma once

#include <cmath>
#include <vector>

#include "mcfe/spatial.hpp"

namespace mcfe {

struct DoaEstimate {
  double azimuth = 0.0;  // degrees, on the search grid
  double score = 0.0;    // max of score_curve
  std::vector<double> grid;
  std::vector<double> score_curve;
  // max / mean of the score curve; close to 1 for a spatially flat field.
  double peak_to_mean = 0.0;
};

struct SslOptions {
  double resolution = 3.0;
  bool phat = true;
  double min_hz = 125.0;
  double max_hz = 7600.0;
};

/// Steered response power over an azimuth grid. For each grid direction the
/// score is sum_{t,f} |sum_i phi_i(t,f) conj(e_i(f))|^2, where phi_i is the
/// spectrum (PHAT: its phase only). Equivalent to summing the real part of every
/// phase-aligned pairwise cross-spectrum, including the constant diagonal.
inline DoaEstimate localize(const MultichannelSpectrogram& spec, const ArrayGeometry& geom,
                            const SslOptions& opts = {}) {
  geom.validate();
  if (spec.channels() < 2) throw ShapeError("localize: at least two channels required");
  if (spec.channels() != geom.num_mics()) throw ShapeError("localize: channel count does not match geometry");
  if (!(opts.resolution > 0)) throw Error("localize: resolution must be positive");
  const double steps = 360.0 / opts.resolution;
  if (std::abs(steps - std::round(steps)) > 1e-9) throw Error("localize: resolution must divide 360");

  const std::size_t mics = spec.channels();
  const StftConfig& cfg = spec.config();
  std::vector<std::size_t> band;
  for (std::size_t f = 0; f < spec.bins(); ++f) {
    const double hz = cfg.bin_hz(f);
    if (hz >= opts.min_hz && hz <= opts.max_hz) band.push_back(f);
  }

  // Time-summed cross-spectral matrices per band bin, (bin, i, j).
  std::vector<cdouble> cross(band.size() * mics * mics, cdouble{});
  std::vector<cdouble> phi(mics);
  for (std::size_t b = 0; b < band.size(); ++b) {
    const std::size_t f = band[b];
    cdouble* g = cross.data() + b * mics * mics;
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      for (std::size_t i = 0; i < mics; ++i) {
        const cdouble x = spec(i, t, f);
        const double mag = std::abs(x);
        phi[i] = opts.phat ? (mag > 0 ? x / mag : cdouble{}) : x;
      }
      for (std::size_t i = 0; i < mics; ++i)
        for (std::size_t j = 0; j < mics; ++j) g[i * mics + j] += phi[i] * std::conj(phi[j]);
    }
  }

  DoaEstimate est;
  const auto n_grid = static_cast<std::size_t>(std::llround(steps));
  est.grid.resize(n_grid);
  est.score_curve.assign(n_grid, 0.0);
  const Vec3 ref = geom.mic_positions.front();
  std::vector<double> tau(mics);
  std::vector<cdouble> e(mics);
  for (std::size_t k = 0; k < n_grid; ++k) {
    const double az = opts.resolution * static_cast<double>(k);
    est.grid[k] = az;
    const Vec3 dir = direction_vector(az);
    for (std::size_t i = 0; i < mics; ++i) tau[i] = -(geom.mic_positions[i] - ref).dot(dir) / geom.speed_of_sound;
    double score = 0;
    for (std::size_t b = 0; b < band.size(); ++b) {
      const double omega = 2.0 * std::numbers::pi * cfg.bin_hz(band[b]);
      for (std::size_t i = 0; i < mics; ++i) e[i] = std::polar(1.0, -omega * tau[i]);
      const cdouble* g = cross.data() + b * mics * mics;
      for (std::size_t i = 0; i < mics; ++i) {
        cdouble row{};
        for (std::size_t j = 0; j < mics; ++j) row += g[i * mics + j] * e[j];
        score += (std::conj(e[i]) * row).real();
      }
    }
    est.score_curve[k] = score;
  }

  std::size_t best = 0;
  double sum = 0;
  for (std::size_t k = 0; k < n_grid; ++k) {
    sum += est.score_curve[k];
    if (est.score_curve[k] > est.score_curve[best]) best = k;
  }
  est.azimuth = est.grid[best];
  est.score = est.score_curve[best];
  const double mean = sum / static_cast<double>(n_grid);
  est.peak_to_mean = mean > 0 ? est.score / mean : 0.0;
  return est;
}

}  // namespace mcfe
