#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mcfe/random.hpp"
#include "mcfe/room.hpp"

namespace mcfe {

/// Voiced, syllabic test signal: a harmonic source shaped by three vowel
/// formants, syllable envelopes with pauses, and short fricative bursts. Sparse
/// in time and frequency the way speech is; peak near 0.5.
inline std::vector<double> synthetic_voice(std::size_t num_samples, std::uint64_t seed, double fs = 16000.0) {
  struct Vowel {
    double f1, f2, f3;
  };
  static constexpr std::array<Vowel, 6> kVowels{{
      {730, 1090, 2440}, {270, 2290, 3010}, {530, 1840, 2480},
      {570, 840, 2410},  {300, 870, 2240},  {660, 1720, 2410},
  }};
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double f0_base = uniform(rng, 90.0, 240.0);
  const double drift_hz = uniform(rng, 0.5, 2.0);
  const double drift_phase = uniform(rng, 0.0, 2 * std::numbers::pi);

  std::vector<double> x(num_samples, 0.0);
  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.1) * fs);
  double phase = 0;
  while (pos < num_samples) {
    const auto len = static_cast<std::size_t>(uniform(rng, 0.12, 0.3) * fs);
    const Vowel& v = kVowels[std::uniform_int_distribution<std::size_t>(0, kVowels.size() - 1)(rng)];
    const double gain = uniform(rng, 0.5, 1.0);
    const bool fricative = uniform(rng, 0.0, 1.0) < 0.3;
    const auto fric_len = static_cast<std::size_t>(0.05 * fs);
    std::size_t voiced_at = pos;
    if (fricative) {
      // High-passed noise burst (first difference of white noise).
      double prev = 0;
      for (std::size_t n = 0; n < fric_len && pos + n < num_samples; ++n) {
        const double w = gauss(rng);
        const double env = std::sin(std::numbers::pi * static_cast<double>(n) / static_cast<double>(fric_len));
        x[pos + n] += 0.08 * gain * env * (w - prev);
        prev = w;
      }
      voiced_at = pos + fric_len;
    }
    for (std::size_t n = 0; n < len && voiced_at + n < num_samples; ++n) {
      const double t = static_cast<double>(voiced_at + n) / fs;
      const double f0 = f0_base * (1.0 + 0.06 * std::sin(2 * std::numbers::pi * drift_hz * t + drift_phase));
      phase += 2 * std::numbers::pi * f0 / fs;
      double s = 0;
      for (int h = 1; h * f0 < 0.47 * fs; ++h) {
        const double f = h * f0;
        double resp = 0;
        for (double fk : {v.f1, v.f2, v.f3}) {
          const double bw = 60.0 + 0.06 * fk;
          const double r = f / fk;
          resp += 1.0 / std::sqrt((1 - r * r) * (1 - r * r) + (f * bw / (fk * fk)) * (f * bw / (fk * fk)));
        }
        s += resp / h * std::sin(h * phase);
      }
      const double env = std::pow(std::sin(std::numbers::pi * static_cast<double>(n) / static_cast<double>(len)), 2.0);
      x[voiced_at + n] += 0.02 * gain * env * s;
    }
    pos = voiced_at + len + static_cast<std::size_t>(uniform(rng, 0.02, 0.25) * fs);
  }
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (double& v : x) v *= 0.5 / peak;
  return x;
}

struct ScriptOptions {
  double min_duration = 1.5;  // seconds
  double max_duration = 4.0;
  // Silence between consecutive turns; negative values overlap the previous turn.
  double min_gap = -0.6;
  double max_gap = 1.0;
  double sample_rate = 16000.0;
};

/// Turn-taking session script with synthetic voices. The first turns visit
/// every speaker once; afterwards the next speaker is drawn from the others.
inline std::vector<CloseTalkSegment> synthetic_script(std::size_t num_speakers, std::size_t num_segments,
                                                      std::uint64_t seed, const ScriptOptions& opts = {}) {
  if (num_speakers == 0) throw Error("script: at least one speaker required");
  Rng rng(seed);
  std::vector<CloseTalkSegment> out;
  double t = 0.2;
  std::size_t prev = num_speakers;
  for (std::size_t k = 0; k < num_segments; ++k) {
    std::size_t spk = k;
    if (k >= num_speakers) {
      spk = std::uniform_int_distribution<std::size_t>(0, num_speakers - 1)(rng);
      if (num_speakers > 1 && spk == prev) spk = (spk + 1) % num_speakers;
    }
    const double dur = uniform(rng, opts.min_duration, opts.max_duration);
    CloseTalkSegment seg;
    seg.speaker_index = spk;
    seg.speaker_id = "spk" + std::to_string(spk);
    seg.transcript = "synthetic utterance " + std::to_string(k);
    seg.start = std::round(t * opts.sample_rate) / opts.sample_rate;
    seg.samples = synthetic_voice(static_cast<std::size_t>(dur * opts.sample_rate), derive_seed(seed, k), opts.sample_rate);
    t = std::max(0.0, seg.start + dur + uniform(rng, opts.min_gap, opts.max_gap));
    out.push_back(std::move(seg));
    prev = spk;
  }
  return out;
}

}  // namespace mcfe
