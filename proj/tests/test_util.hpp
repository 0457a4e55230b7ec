#pragma once

// Shared helpers for the test suites. Signal generators here are written
// independently of the library's steering / simulation code so they can act as
// oracles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "mcfe/fft.hpp"
#include "mcfe/spatial.hpp"
#include "mcfe/stft.hpp"

namespace mcfe::testing {

inline std::vector<double> gaussian_noise(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

inline MultichannelPcm random_pcm(std::size_t channels, std::size_t n, std::uint64_t seed, double rate = 16000.0) {
  MultichannelPcm p(channels, n, rate);
  for (std::size_t m = 0; m < channels; ++m) p[m] = gaussian_noise(n, seed * 131 + m);
  return p;
}

// Speech-like source: a few harmonic tones with a slowly varying fundamental,
// gated on and off at syllable rate, plus a little noise. Sparse in the
// time-frequency plane like speech.
inline std::vector<double> speechlike(std::size_t n, std::uint64_t seed, double rate = 16000.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0 = 100.0 + 120.0 * u(rng);
  const double vib = 2.0 + 4.0 * u(rng);
  const double syll = 3.0 + 3.0 * u(rng);
  const double phase0 = 2 * std::numbers::pi * u(rng);
  std::vector<double> amps(30);
  for (auto& a : amps) a = 0.2 + u(rng);
  std::normal_distribution<double> g(0.0, 0.02);
  std::vector<double> x(n);
  double phase = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = f0 * (1.0 + 0.08 * std::sin(2 * std::numbers::pi * vib * t));
    phase += 2 * std::numbers::pi * f / rate;
    double v = 0;
    for (std::size_t h = 1; h <= amps.size(); ++h) {
      if (f * static_cast<double>(h) > rate / 2 - 200) break;
      v += amps[h - 1] / static_cast<double>(h) * std::sin(static_cast<double>(h) * phase);
    }
    const double env = std::pow(std::max(0.0, std::sin(2 * std::numbers::pi * syll * t + phase0)), 2.0);
    x[i] = env * v + g(rng);
  }
  return x;
}

// Plane wave from azimuth `doa_deg` on `geom`: each channel is the source
// delayed by its far-field arrival delay relative to mic 0, applied as a
// linear phase in one long DFT.
inline MultichannelPcm plane_wave(const std::vector<double>& src, const ArrayGeometry& geom, double doa_deg,
                                  double rate = 16000.0) {
  const std::size_t n = src.size();
  const std::size_t p = next_pow2(2 * n);
  std::vector<double> buf(p, 0.0);
  std::copy(src.begin(), src.end(), buf.begin() + static_cast<std::ptrdiff_t>(n / 2));
  std::vector<cdouble> spec(p / 2 + 1);
  rfft(buf, spec);
  const double az = doa_deg * std::numbers::pi / 180.0;
  const double ux = std::cos(az), uy = std::sin(az);
  MultichannelPcm out(geom.num_mics(), n, rate);
  std::vector<cdouble> shifted(spec.size());
  for (std::size_t i = 0; i < geom.num_mics(); ++i) {
    const auto& q = geom.mic_positions[i];
    const auto& r = geom.mic_positions[0];
    // Projection of (q - r) on the source direction: positive means closer to the source.
    const double lead = ((q.x - r.x) * ux + (q.y - r.y) * uy) / geom.speed_of_sound;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double w = 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(p) * rate;
      shifted[k] = spec[k] * std::polar(1.0, w * lead);
    }
    if (p % 2 == 0) shifted.back() = shifted.back().real();
    irfft(shifted, buf);
    std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(n / 2), n, out[i].begin());
  }
  return out;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Reverberation time from the backward-integrated energy decay, fitted by
// least squares between -5 and -25 dB and extrapolated to -60 dB.
inline double schroeder_t60(const std::vector<double>& h, double fs = 16000.0) {
  std::vector<double> edc(h.size());
  double acc = 0;
  for (std::size_t n = h.size(); n-- > 0;) {
    acc += h[n] * h[n];
    edc[n] = acc;
  }
  std::vector<double> t, db;
  for (std::size_t n = 0; n < h.size(); ++n) {
    const double v = 10 * std::log10(edc[n] / edc[0]);
    if (v <= -5 && v >= -25) {
      t.push_back(static_cast<double>(n) / fs);
      db.push_back(v);
    }
  }
  const double k = static_cast<double>(t.size());
  double st = 0, sd = 0, stt = 0, std_ = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sd += db[i];
    stt += t[i] * t[i];
    std_ += t[i] * db[i];
  }
  const double slope = (k * std_ - st * sd) / (k * stt - st * st);
  return -60.0 / slope;
}

// Kolmogorov-Smirnov statistic of `x` against the uniform law on [lo, hi].
inline double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  double d = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = (x[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(cdf - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - cdf)});
  }
  return d;
}

// Asymptotic Kolmogorov p-value for statistic d on n samples (Stephens' correction).
inline double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace mcfe::testing
