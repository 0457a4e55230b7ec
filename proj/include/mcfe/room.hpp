#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "mcfe/fft.hpp"
#include "mcfe/parallel.hpp"
#include "mcfe/random.hpp"
#include "mcfe/spatial.hpp"
#include "mcfe/stft.hpp"

namespace mcfe {

// Shoebox room with the array and speakers placed inside. rt60 <= 0 means
// anechoic (fully absorbing walls).
struct RoomConfig {
  Vec3 dims{6.0, 5.0, 3.0};
  double rt60 = 0.3;
  Vec3 array_center{3.0, 2.5, 1.2};  // z is the array height
  std::vector<Vec3> speaker_positions;
  std::uint64_t seed = 0;

  bool inside(const Vec3& p) const {
    return p.x > 0 && p.x < dims.x && p.y > 0 && p.y < dims.y && p.z > 0 && p.z < dims.z;
  }

  void validate() const {
    if (!(dims.x > 0 && dims.y > 0 && dims.z > 0)) throw Error("room: dimensions must be positive");
    if (!inside(array_center)) throw Error("room: array center outside the room");
    for (const auto& p : speaker_positions)
      if (!inside(p)) throw Error("room: speaker position outside the room");
  }

  // Azimuth of speaker k as seen from the array center, degrees in [0, 360).
  double speaker_doa(std::size_t k) const {
    const Vec3 d = speaker_positions.at(k) - array_center;
    return wrap_degrees(rad2deg(std::atan2(d.y, d.x)));
  }
};

struct RoomSampling {
  double min_length = 4.0, max_length = 10.0;
  double min_width = 4.0, max_width = 10.0;
  double min_height = 2.0, max_height = 5.0;
  double min_rt60 = 0.15, max_rt60 = 0.6;
  double min_array_height = 1.0, max_array_height = 1.5;
  double min_speaker_height = 1.0, max_speaker_height = 1.8;
  double min_speaker_distance = 1.0;
  double wall_margin = 0.5;
  int max_attempts = 1000;
};

/// Draws a room, RT60, array position and speaker positions. Deterministic in
/// `seed`. Throws InfeasibleError when a speaker cannot be placed.
inline RoomConfig sample_room(std::size_t num_speakers, std::uint64_t seed, const RoomSampling& s = {}) {
  if (num_speakers < 1) throw Error("sample room: at least one speaker required");
  Rng rng(seed);
  RoomConfig room;
  room.seed = seed;
  room.dims = {uniform(rng, s.min_length, s.max_length), uniform(rng, s.min_width, s.max_width),
               uniform(rng, s.min_height, s.max_height)};
  room.rt60 = uniform(rng, s.min_rt60, s.max_rt60);
  const double m = s.wall_margin;
  room.array_center = {uniform(rng, m, room.dims.x - m), uniform(rng, m, room.dims.y - m),
                       uniform(rng, s.min_array_height, std::min(s.max_array_height, room.dims.z - m))};
  const double top = std::min(s.max_speaker_height, room.dims.z - m);
  for (std::size_t k = 0; k < num_speakers; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < s.max_attempts && !placed; ++attempt) {
      const Vec3 p{uniform(rng, m, room.dims.x - m), uniform(rng, m, room.dims.y - m),
                   uniform(rng, s.min_speaker_height, top)};
      if ((p - room.array_center).norm() >= s.min_speaker_distance) {
        room.speaker_positions.push_back(p);
        placed = true;
      }
    }
    if (!placed)
      throw InfeasibleError("sample room: could not place speaker " + std::to_string(k) + " after " +
                            std::to_string(s.max_attempts) + " attempts");
  }
  return room;
}

struct RirOptions {
  double sample_rate = 16000.0;
  double speed_of_sound = 343.0;
  // RIR duration in seconds; 0 derives it from rt60 (covers at least rt60).
  double length_s = 0.0;
  std::size_t max_images = 10'000'000;
  // Half-width of the windowed-sinc fractional delay, in samples.
  int sinc_half_width = 16;
  // High-pass applied to reverberant responses; 0 disables it.
  double high_pass_hz = 100.0;
};

// Wall reflection coefficient (pressure) from the Eyring formula.
inline double eyring_reflection_coefficient(const RoomConfig& room, double c = 343.0) {
  if (room.rt60 <= 0) return 0.0;
  const Vec3& d = room.dims;
  const double volume = d.x * d.y * d.z;
  const double surface = 2.0 * (d.x * d.y + d.x * d.z + d.y * d.z);
  const double sabine = 24.0 * std::numbers::ln10 / c;
  // (1 - alpha) = exp(-sabine * V / (S * T60)); beta = sqrt(1 - alpha).
  return std::exp(-0.5 * sabine * volume / (surface * room.rt60));
}

namespace detail {

// Normalized energy decay of the image lattice at reduced time x = a c t,
// where a = -2 ln(beta). An image reached along direction u after travelling r
// has undergone about r * g(u) reflections, g(u) = sum_k |u_k| / L_k. Images
// are uniform in space and their energy falls as 1/r^2, so the backward
// integrated decay is the direction average of exp(-x g) / g.
class LatticeDecay {
 public:
  explicit LatticeDecay(const Vec3& dims, std::size_t directions = 2048) {
    rates_.reserve(directions);
    const double golden = std::numbers::pi * (1.0 + std::sqrt(5.0));
    for (std::size_t i = 0; i < directions; ++i) {
      const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(directions);
      const double rho = std::sqrt(1.0 - z * z), phi = golden * (static_cast<double>(i) + 0.5);
      rates_.push_back(std::abs(rho * std::cos(phi)) / dims.x + std::abs(rho * std::sin(phi)) / dims.y +
                       std::abs(z) / dims.z);
    }
    level0_ = edc(0.0);
  }

  double db(double x) const { return 10.0 * std::log10(edc(x) / level0_); }

  // Reduced time at which the decay first reaches `target_db`.
  double reach(double target_db) const {
    double lo = 0.0, hi = 1.0;
    while (db(hi) > target_db) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (db(mid) > target_db ? lo : hi) = mid;
    }
    return lo;
  }

 private:
  double edc(double x) const {
    double acc = 0;
    for (double g : rates_) acc += std::exp(-x * g) / g;
    return acc;
  }

  std::vector<double> rates_;
  double level0_ = 1.0;
};

}  // namespace detail

// Wall reflection coefficient (pressure) for which the image-source response of
// this room decays with the requested RT60, measured the usual way: a line fit
// to the Schroeder curve between -5 and -25 dB, extrapolated to -60 dB. In
// elongated rooms this is noticeably smaller than the Eyring value, because
// late energy travels along the directions that meet the fewest walls.
inline double reflection_coefficient(const RoomConfig& room, double c = 343.0) {
  if (room.rt60 <= 0) return 0.0;
  const detail::LatticeDecay decay(room.dims);
  const double x5 = decay.reach(-5.0), x25 = decay.reach(-25.0);
  // Least-squares slope in dB per unit reduced time over [x5, x25].
  constexpr int kPoints = 64;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < kPoints; ++i) {
    const double x = x5 + (x25 - x5) * i / (kPoints - 1);
    const double y = decay.db(x);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (kPoints * sxy - sx * sy) / (kPoints * sxx - sx * sx);
  // T60 = -60 / (slope * a * c)  =>  a = -60 / (slope * c * T60).
  const double a = -60.0 / (slope * c * room.rt60);
  return std::exp(-0.5 * a);
}

namespace detail {

// Second-order DC-blocking high-pass of the classic image-method
// implementation. The in-phase image sum otherwise builds up a slowly decaying
// sub-audio component.
inline void image_high_pass(std::vector<double>& h, double cutoff_hz, double fs) {
  const double w = 2.0 * std::numbers::pi * cutoff_hz / fs;
  const double r1 = std::exp(-w), b1 = 2.0 * r1 * std::cos(w), b2 = -r1 * r1, a1 = -(1.0 + r1);
  double y1 = 0, y2 = 0, x1 = 0, x2 = 0;
  for (double& v : h) {
    const double x0 = v;
    const double y0 = b1 * y1 + b2 * y2 + x0 + a1 * x1 + r1 * x2;
    y2 = y1;
    y1 = y0;
    x2 = x1;
    x1 = x0;
    v = y0;
  }
}

}  // namespace detail

/// Image-source room impulse response between `src` and `mic`. Each image adds
/// a Hann-windowed sinc centered at its propagation delay, scaled by
/// beta^reflections / (4 pi r). Reverberant responses are then high-passed.
inline std::vector<double> image_rir(const RoomConfig& room, const Vec3& src, const Vec3& mic,
                                     const RirOptions& opts = {}) {
  if (!room.inside(src) || !room.inside(mic)) throw Error("image rir: source or microphone outside the room");
  if ((src - mic).norm() <= 0) throw Error("image rir: source and microphone coincide");
  const double c = opts.speed_of_sound, fs = opts.sample_rate;
  const double beta = reflection_coefficient(room, c);
  const double direct = (src - mic).norm();
  const int hw = opts.sinc_half_width;

  double length_s = opts.length_s;
  if (length_s <= 0) length_s = std::max(room.rt60, 0.0) * 1.1 + direct / c;
  const auto taps = static_cast<std::size_t>(std::ceil(std::max(length_s, direct / c) * fs)) + hw + 2;
  std::vector<double> h(taps, 0.0);
  const double max_dist = (static_cast<double>(taps) - hw - 1) / fs * c;

  const double dims[3] = {room.dims.x, room.dims.y, room.dims.z};
  const double s[3] = {src.x, src.y, src.z};
  const double r[3] = {mic.x, mic.y, mic.z};
  int range[3];
  for (int a = 0; a < 3; ++a) range[a] = beta > 0 ? static_cast<int>(std::ceil(max_dist / (2 * dims[a]))) + 1 : 1;

  std::size_t count = 0;
  for (int nx = -range[0]; nx <= range[0]; ++nx)
    for (int qx = 0; qx < 2; ++qx) {
      const double dx = 2 * nx * dims[0] + (qx ? -s[0] : s[0]) - r[0];
      const int rx = std::abs(nx - qx) + std::abs(nx);
      for (int ny = -range[1]; ny <= range[1]; ++ny)
        for (int qy = 0; qy < 2; ++qy) {
          const double dy = 2 * ny * dims[1] + (qy ? -s[1] : s[1]) - r[1];
          const int ry = std::abs(ny - qy) + std::abs(ny);
          const double dxy2 = dx * dx + dy * dy;
          if (dxy2 > max_dist * max_dist) continue;
          for (int nz = -range[2]; nz <= range[2]; ++nz)
            for (int qz = 0; qz < 2; ++qz) {
              const double dz = 2 * nz * dims[2] + (qz ? -s[2] : s[2]) - r[2];
              const double dist = std::sqrt(dxy2 + dz * dz);
              if (dist > max_dist) continue;
              const int refl = rx + ry + std::abs(nz - qz) + std::abs(nz);
              const double gain = (refl == 0 ? 1.0 : std::pow(beta, refl)) / (4 * std::numbers::pi * dist);
              if (gain == 0.0) continue;
              if (++count > opts.max_images)
                throw Error("image rir: image count exceeds cap of " + std::to_string(opts.max_images));
              const double delay = dist / c * fs;
              const auto center = static_cast<long>(std::floor(delay));
              for (long k = center - hw + 1; k <= center + hw; ++k) {
                if (k < 0 || k >= static_cast<long>(taps)) continue;
                const double x = static_cast<double>(k) - delay;
                double v;
                if (std::abs(x) < 1e-12) {
                  v = 1.0;
                } else {
                  const double px = std::numbers::pi * x;
                  v = std::sin(px) / px * 0.5 * (1.0 + std::cos(px / (hw + 1)));
                }
                h[static_cast<std::size_t>(k)] += gain * v;
              }
            }
        }
    }
  if (beta > 0 && opts.high_pass_hz > 0) detail::image_high_pass(h, opts.high_pass_hz, fs);
  return h;
}

enum class NoiseSpectrum { White, Pink };

/// Noise whose inter-channel coherence follows the spherically isotropic model
/// sinc(2 pi f d_ij / c). Generated in one long DFT: independent complex
/// Gaussian bins are mixed per frequency by a square root of the coherence
/// matrix. The result is scaled to unit variance averaged over channels.
inline MultichannelPcm diffuse_noise(const ArrayGeometry& geom, std::size_t num_samples, std::uint64_t seed,
                                     NoiseSpectrum spectrum = NoiseSpectrum::White, double sample_rate = 16000.0) {
  geom.validate();
  if (num_samples == 0) throw Error("diffuse noise: duration must be positive");
  const std::size_t mics = geom.num_mics();
  const std::size_t n = next_pow2(num_samples);
  const std::size_t bins = n / 2 + 1;
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<cdouble>> spec(mics, std::vector<cdouble>(bins));
  Eigen::MatrixXd coherence(mics, mics);
  Eigen::VectorXcd white(mics);
  for (std::size_t f = 0; f < bins; ++f) {
    const double hz = static_cast<double>(f) * sample_rate / static_cast<double>(n);
    for (std::size_t i = 0; i < mics; ++i)
      for (std::size_t j = 0; j < mics; ++j) {
        const double d = (geom.mic_positions[i] - geom.mic_positions[j]).norm();
        const double arg = 2.0 * std::numbers::pi * hz * d / geom.speed_of_sound;
        coherence(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = arg == 0.0 ? 1.0 : std::sin(arg) / arg;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(coherence);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd mix = eig.eigenvectors() * root.asDiagonal();
    for (std::size_t i = 0; i < mics; ++i) {
      const double re = gauss(rng), im = gauss(rng);
      white(static_cast<Eigen::Index>(i)) = cdouble(re, im);
    }
    if (f == 0 || f == bins - 1) white = white.real().cast<cdouble>();
    double shape = 1.0;
    if (spectrum == NoiseSpectrum::Pink) shape = 1.0 / std::sqrt(std::max(hz, 50.0) / 1000.0);
    const Eigen::VectorXcd mixed = mix.cast<cdouble>() * white * shape;
    for (std::size_t i = 0; i < mics; ++i) spec[i][f] = mixed(static_cast<Eigen::Index>(i));
  }

  MultichannelPcm out(mics, num_samples, sample_rate);
  std::vector<double> buf(n);
  double power = 0;
  for (std::size_t i = 0; i < mics; ++i) {
    irfft(spec[i], buf);
    std::copy_n(buf.begin(), num_samples, out[i].begin());
    for (double v : out[i]) power += v * v;
  }
  power /= static_cast<double>(mics * num_samples);
  const double scale = power > 0 ? 1.0 / std::sqrt(power) : 0.0;
  for (auto& ch : out.channels)
    for (double& v : ch) v *= scale;
  return out;
}

// Mean square over all channels and samples.
inline double mean_power(const MultichannelPcm& pcm) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& ch : pcm.channels) {
    for (double v : ch) acc += v * v;
    n += ch.size();
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

inline double peak_abs(const MultichannelPcm& pcm) {
  double peak = 0;
  for (const auto& ch : pcm.channels)
    for (double v : ch) peak = std::max(peak, std::abs(v));
  return peak;
}

// Close-talk (dry) segment for one speaker of a session.
/// Multichannel image of `samples` emitted by speaker `speaker_index`, truncated
/// to the source length.
inline MultichannelPcm spatialize(const RoomConfig& room, const ArrayGeometry& geom, std::span<const double> samples,
                                  std::size_t speaker_index, RirOptions opts = {}) {
  if (speaker_index >= room.speaker_positions.size()) throw ShapeError("spatialize: speaker index out of range");
  opts.speed_of_sound = geom.speed_of_sound;
  const auto mics = geom.placed_at(room.array_center);
  MultichannelPcm out(mics.size(), samples.size(), opts.sample_rate);
  const std::vector<double> x(samples.begin(), samples.end());
  for (std::size_t m = 0; m < mics.size(); ++m) {
    const auto y = fft_convolve(x, image_rir(room, room.speaker_positions[speaker_index], mics[m], opts));
    std::copy_n(y.begin(), samples.size(), out[m].begin());
  }
  return out;
}

struct CloseTalkSegment {
  std::size_t speaker_index = 0;
  std::string speaker_id;
  std::string transcript;
  double start = 0.0;  // seconds
  std::vector<double> samples;
};

// One simulated (or real) multichannel segment. `speech_image` and
// `interference` are the separated components of `audio` when known.
struct SimSegment {
  MultichannelPcm audio;
  std::optional<MultichannelPcm> speech_image;
  std::optional<MultichannelPcm> interference;
  std::string transcript;
  std::string speaker_id;
  std::string session_id;
  double start = 0.0;
  double end = 0.0;
  double overlap_ratio = 0.0;
  double doa_truth = 0.0;
  double snr_db = 0.0;
};

struct SimOptions {
  std::string session_id = "session";
  bool add_noise = true;
  double min_snr_db = -5.0;
  double max_snr_db = 10.0;
  std::optional<double> fixed_snr_db;
  NoiseSpectrum noise_spectrum = NoiseSpectrum::Pink;
  // Session peak after normalization, dBFS.
  double target_peak_dbfs = -3.0;
  RirOptions rir;
  std::size_t jobs = 1;
};

struct SessionSimulation {
  std::vector<SimSegment> segments;
  std::vector<std::string> skipped;  // one message per skipped input segment
};

/// Convolves each close-talk segment with its speaker's RIRs, adds diffuse
/// noise at a per-segment SNR, and scales the whole session to a common peak.
/// Segments are cut from one session timeline: where another speaker's segment
/// overlaps in time, its image is added to the audio and to the interference.
/// The SNR is speech image over diffuse noise. Per-segment randomness comes
/// from derive_seed(room.seed, index), so results do not depend on `jobs`.
inline SessionSimulation simulate_session(const RoomConfig& room, const std::vector<CloseTalkSegment>& close_talk,
                                          const ArrayGeometry& geom, const SimOptions& opts = {}) {
  room.validate();
  geom.validate();
  const auto mic_positions = geom.placed_at(room.array_center);
  for (const auto& p : mic_positions)
    if (!room.inside(p)) throw Error("simulate: microphone outside the room");
  for (const auto& seg : close_talk)
    if (seg.speaker_index >= room.speaker_positions.size())
      throw ShapeError("simulate: segment speaker index exceeds configured speakers");

  RirOptions rir_opts = opts.rir;
  rir_opts.speed_of_sound = geom.speed_of_sound;
  const std::size_t speakers = room.speaker_positions.size();
  std::vector<std::vector<std::vector<double>>> rirs(speakers);
  parallel_for(speakers, opts.jobs, [&](std::size_t k) {
    for (const auto& mic : mic_positions) rirs[k].push_back(image_rir(room, room.speaker_positions[k], mic, rir_opts));
  });

  const double fs = rir_opts.sample_rate;
  std::vector<std::optional<SimSegment>> slots(close_talk.size());
  std::vector<std::string> reasons(close_talk.size());
  parallel_for(close_talk.size(), opts.jobs, [&](std::size_t i) {
    const auto& in = close_talk[i];
    if (in.samples.empty()) {
      reasons[i] = "segment " + std::to_string(i) + ": empty source";
      return;
    }
    const std::size_t len = in.samples.size();
    SimSegment seg;
    seg.speaker_id = in.speaker_id;
    seg.transcript = in.transcript;
    seg.session_id = opts.session_id;
    seg.start = in.start;
    seg.end = in.start + static_cast<double>(len) / fs;
    seg.doa_truth = room.speaker_doa(in.speaker_index);

    MultichannelPcm image(mic_positions.size(), len, fs);
    for (std::size_t m = 0; m < mic_positions.size(); ++m) {
      auto y = fft_convolve(in.samples, rirs[in.speaker_index][m]);
      std::copy_n(y.begin(), len, image[m].begin());
    }
    const double speech_power = mean_power(image);
    if (!(speech_power > 0)) {
      reasons[i] = "segment " + std::to_string(i) + ": silent source, SNR undefined";
      return;
    }
    MultichannelPcm noise(mic_positions.size(), len, fs);
    Rng rng(derive_seed(room.seed, i));
    if (opts.add_noise) {
      seg.snr_db = opts.fixed_snr_db ? *opts.fixed_snr_db : uniform(rng, opts.min_snr_db, opts.max_snr_db);
      noise = diffuse_noise(geom, len, rng(), opts.noise_spectrum, fs);
      const double gain = std::sqrt(speech_power / (mean_power(noise) * std::pow(10.0, seg.snr_db / 10.0)));
      for (auto& ch : noise.channels)
        for (double& v : ch) v *= gain;
    } else {
      seg.snr_db = std::numeric_limits<double>::infinity();
    }
    seg.speech_image = std::move(image);
    seg.interference = std::move(noise);
    slots[i] = std::move(seg);
  });

  // Cross-talk from other speakers' segments on the shared timeline.
  std::vector<std::size_t> speaker_of(close_talk.size());
  for (std::size_t i = 0; i < close_talk.size(); ++i) speaker_of[i] = close_talk[i].speaker_index;
  parallel_for(slots.size(), opts.jobs, [&](std::size_t i) {
    if (!slots[i]) return;
    auto& seg = *slots[i];
    const std::size_t len = seg.speech_image->num_samples();
    std::vector<std::uint8_t> covered(len, 0);
    for (std::size_t j = 0; j < slots.size(); ++j) {
      if (j == i || !slots[j] || speaker_of[j] == speaker_of[i]) continue;
      const auto& other = *slots[j];
      if (other.start >= seg.end || other.end <= seg.start) continue;
      const auto shift = static_cast<long>(std::llround((other.start - seg.start) * fs));
      const auto& img = *other.speech_image;
      const long first = std::max(0L, shift);
      const long last = std::min(static_cast<long>(len), shift + static_cast<long>(img.num_samples()));
      for (std::size_t m = 0; m < img.num_channels(); ++m)
        for (long n = first; n < last; ++n) (*seg.interference)[m][static_cast<std::size_t>(n)] += img[m][static_cast<std::size_t>(n - shift)];
      for (long n = first; n < last; ++n) covered[static_cast<std::size_t>(n)] = 1;
    }
    std::size_t overlapped = 0;
    for (auto c : covered) overlapped += c;
    seg.overlap_ratio = static_cast<double>(overlapped) / static_cast<double>(len);
  });
  for (auto& slot : slots) {
    if (!slot) continue;
    slot->audio = *slot->speech_image;
    for (std::size_t m = 0; m < slot->audio.num_channels(); ++m)
      for (std::size_t n = 0; n < slot->audio.num_samples(); ++n) slot->audio[m][n] += (*slot->interference)[m][n];
  }

  SessionSimulation sim;
  double peak = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      peak = std::max(peak, peak_abs(slots[i]->audio));
      sim.segments.push_back(std::move(*slots[i]));
    } else {
      sim.skipped.push_back(reasons[i]);
    }
  }
  if (peak > 0) {
    const double gain = std::pow(10.0, opts.target_peak_dbfs / 20.0) / peak;
    auto scale = [gain](MultichannelPcm& p) {
      for (auto& ch : p.channels)
        for (double& v : ch) v *= gain;
    };
    for (auto& seg : sim.segments) {
      scale(seg.audio);
      scale(*seg.speech_image);
      scale(*seg.interference);
    }
  }
  return sim;
}

enum class OverlapPlacement {
  End,     // interference ends where the base segment ends
  Random,  // uniformly random offset inside the base segment
};

struct OverlapResult {
  SimSegment segment;
  std::size_t span_begin = 0;  // overlapped samples are [span_begin, span_end)
  std::size_t span_end = 0;
};

/// Adds a trimmed piece of another speaker's segment onto `base`. The trimmed
/// length is round(ratio * len(base)) samples (at least 1, at most the
/// interferer length). The base transcript is kept unchanged.
inline OverlapResult mix_overlap(const SimSegment& base, const SimSegment& interferer, double ratio,
                                 std::uint64_t seed, OverlapPlacement placement = OverlapPlacement::End) {
  if (interferer.speaker_id == base.speaker_id) throw Error("overlap: interferer must be a different speaker");
  if (interferer.session_id != base.session_id) throw Error("overlap: interferer must come from the same session");
  if (interferer.audio.num_channels() != base.audio.num_channels()) throw ShapeError("overlap: channel count mismatch");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("overlap: ratio must be in (0, 1]");
  const std::size_t len = base.audio.num_samples();
  const std::size_t ilen = interferer.audio.num_samples();
  if (len == 0 || ilen == 0) throw Error("overlap: empty segment");

  std::size_t n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(len)));
  n = std::clamp<std::size_t>(n, 1, len);
  n = std::min(n, ilen);

  Rng rng(seed);
  const std::size_t src_offset = std::uniform_int_distribution<std::size_t>(0, ilen - n)(rng);
  const std::size_t dst_offset =
      placement == OverlapPlacement::End ? len - n : std::uniform_int_distribution<std::size_t>(0, len - n)(rng);

  OverlapResult res;
  res.segment = base;
  res.span_begin = dst_offset;
  res.span_end = dst_offset + n;
  auto& out = res.segment;
  if (!out.interference) out.interference = MultichannelPcm(base.audio.num_channels(), len, base.audio.sample_rate);
  for (std::size_t m = 0; m < base.audio.num_channels(); ++m) {
    for (std::size_t k = 0; k < n; ++k) {
      const double v = interferer.audio[m][src_offset + k];
      out.audio[m][dst_offset + k] += v;
      (*out.interference)[m][dst_offset + k] += v;
    }
  }
  out.overlap_ratio = static_cast<double>(n) / static_cast<double>(len);
  return res;
}

}  // namespace mcfe
