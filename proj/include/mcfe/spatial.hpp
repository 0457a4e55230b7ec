#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcfe/binary_io.hpp"
#include "mcfe/stft.hpp"

namespace mcfe {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Wraps degrees into [0, 360).
inline double wrap_degrees(double d) {
  double w = std::fmod(d, 360.0);
  if (w < 0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

// Smallest absolute angular difference, in [0, 180].
inline double angular_distance(double a, double b) {
  const double d = wrap_degrees(a - b);
  return std::min(d, 360.0 - d);
}

// Wraps radians into (-pi, pi].
inline double wrap_phase(double r) {
  double w = std::remainder(r, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

// Microphone positions in meters. Index 0 is the reference microphone.
struct ArrayGeometry {
  std::vector<Vec3> mic_positions;
  double speed_of_sound = 343.0;

  std::size_t num_mics() const { return mic_positions.size(); }

  void validate() const {
    if (mic_positions.empty()) throw Error("geometry: at least one microphone required");
    for (const auto& p : mic_positions)
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw Error("geometry: non-finite microphone position");
    if (!(speed_of_sound > 0)) throw Error("geometry: speed of sound must be positive");
  }

  // Seven microphones: one at the center (index 0) and six on a circle.
  static ArrayGeometry circular7(double radius = 0.0425) {
    ArrayGeometry g;
    g.mic_positions.push_back({0, 0, 0});
    for (int i = 0; i < 6; ++i) {
      const double a = deg2rad(60.0 * i);
      g.mic_positions.push_back({radius * std::cos(a), radius * std::sin(a), 0});
    }
    return g;
  }

  // Rotation about the z axis by `degrees` (counter-clockwise).
  ArrayGeometry rotated(double degrees) const {
    const double c = std::cos(deg2rad(degrees)), s = std::sin(deg2rad(degrees));
    ArrayGeometry g = *this;
    for (auto& p : g.mic_positions) p = {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
    return g;
  }

  // Absolute mic positions when the array's origin is placed at `center`.
  std::vector<Vec3> placed_at(const Vec3& center) const {
    std::vector<Vec3> out;
    for (const auto& p : mic_positions) out.push_back(p + center);
    return out;
  }
};

// Unit vector pointing from the array toward a far-field source.
inline Vec3 direction_vector(double azimuth_deg, double elevation_deg = 0.0) {
  const double az = deg2rad(azimuth_deg), el = deg2rad(elevation_deg);
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

// Far-field steering vectors for one direction, (mic, bin) row-major.
struct SteeringField {
  double doa = 0.0;
  double elevation = 0.0;
  std::size_t mics = 0;
  std::size_t bins = 0;
  std::vector<cdouble> vectors;

  const cdouble& operator()(std::size_t i, std::size_t f) const { return vectors[i * bins + f]; }
};

/// Entry (i, f) = exp(-j 2 pi f_hz tau_i), where tau_i is the plane-wave arrival
/// delay at mic i relative to mic 0.
inline SteeringField steering_vector(const ArrayGeometry& geom, double doa_deg, const StftConfig& cfg,
                                     double elevation_deg = 0.0) {
  geom.validate();
  SteeringField sf;
  sf.doa = wrap_degrees(doa_deg);
  sf.elevation = elevation_deg;
  sf.mics = geom.num_mics();
  sf.bins = cfg.num_bins();
  sf.vectors.resize(sf.mics * sf.bins);
  const Vec3 k = direction_vector(sf.doa, elevation_deg);
  const Vec3 ref = geom.mic_positions.front();
  for (std::size_t i = 0; i < sf.mics; ++i) {
    const double tau = -(geom.mic_positions[i] - ref).dot(k) / geom.speed_of_sound;
    for (std::size_t f = 0; f < sf.bins; ++f) {
      if (i == 0) {
        sf.vectors[f] = {1.0, 0.0};
        continue;
      }
      const double phase = -2.0 * std::numbers::pi * cfg.bin_hz(f) * tau;
      sf.vectors[i * sf.bins + f] = std::polar(1.0, phase);
    }
  }
  return sf;
}

enum class IpdNormalization {
  None,
  // Subtract the per-(pair, bin) circular mean phase over the utterance and re-wrap.
  CircularMean,
  // Emit (cos, sin) of the IPD with the per-(pair, bin) temporal mean removed.
  CosSinMeanRemoval,
};

// IPD of channels 1..M-1 against channel 0, indexed (pair, component, frame, bin).
struct IpdFeature {
  std::size_t pairs = 0;
  std::size_t components = 1;
  std::size_t frames = 0;
  std::size_t bins = 0;
  IpdNormalization normalization = IpdNormalization::None;
  std::vector<double> values;
  // Bins whose reference-channel magnitude is zero; their IPD is 0 by convention.
  std::vector<std::uint8_t> zero_reference;

  double operator()(std::size_t p, std::size_t c, std::size_t t, std::size_t f) const {
    return values[((p * components + c) * frames + t) * bins + f];
  }
  double& at(std::size_t p, std::size_t c, std::size_t t, std::size_t f) {
    return values[((p * components + c) * frames + t) * bins + f];
  }
  std::size_t block_width() const { return pairs * components * bins; }
};

inline IpdFeature compute_ipd(const MultichannelSpectrogram& spec,
                              IpdNormalization norm = IpdNormalization::None) {
  if (spec.channels() < 2) throw ShapeError("ipd: at least two channels required");
  IpdFeature ipd;
  ipd.pairs = spec.channels() - 1;
  ipd.components = norm == IpdNormalization::CosSinMeanRemoval ? 2 : 1;
  ipd.frames = spec.frames();
  ipd.bins = spec.bins();
  ipd.normalization = norm;
  ipd.values.assign(ipd.pairs * ipd.components * ipd.frames * ipd.bins, 0.0);
  ipd.zero_reference.assign(ipd.frames * ipd.bins, 0);

  for (std::size_t t = 0; t < ipd.frames; ++t)
    for (std::size_t f = 0; f < ipd.bins; ++f)
      if (spec(0, t, f) == cdouble{}) ipd.zero_reference[t * ipd.bins + f] = 1;

  for (std::size_t p = 0; p < ipd.pairs; ++p) {
    const std::size_t m = p + 1;
    for (std::size_t f = 0; f < ipd.bins; ++f) {
      cdouble phasor_sum{};
      double cos_sum = 0, sin_sum = 0;
      std::size_t valid = 0;
      std::vector<double> raw(ipd.frames, 0.0);
      for (std::size_t t = 0; t < ipd.frames; ++t) {
        if (ipd.zero_reference[t * ipd.bins + f]) continue;
        raw[t] = wrap_phase(std::arg(spec(m, t, f)) - std::arg(spec(0, t, f)));
        phasor_sum += std::polar(1.0, raw[t]);
        cos_sum += std::cos(raw[t]);
        sin_sum += std::sin(raw[t]);
        ++valid;
      }
      for (std::size_t t = 0; t < ipd.frames; ++t) {
        const bool zero = ipd.zero_reference[t * ipd.bins + f] != 0;
        switch (norm) {
          case IpdNormalization::None:
            ipd.at(p, 0, t, f) = raw[t];
            break;
          case IpdNormalization::CircularMean: {
            const double shift = std::abs(phasor_sum) > 0 ? std::arg(phasor_sum) : 0.0;
            ipd.at(p, 0, t, f) = zero ? 0.0 : wrap_phase(raw[t] - shift);
            break;
          }
          case IpdNormalization::CosSinMeanRemoval: {
            const double n = valid > 0 ? static_cast<double>(valid) : 1.0;
            ipd.at(p, 0, t, f) = zero ? 0.0 : std::cos(raw[t]) - cos_sum / n;
            ipd.at(p, 1, t, f) = zero ? 0.0 : std::sin(raw[t]) - sin_sum / n;
            break;
          }
        }
      }
    }
  }
  return ipd;
}

struct AngleFeature {
  std::size_t frames = 0;
  std::size_t bins = 0;
  double doa = 0.0;
  std::vector<double> values;  // (frame, bin), each in [-1, 1]

  double operator()(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
  double& operator()(std::size_t t, std::size_t f) { return values[t * bins + f]; }
};

/// Mean over pairs (i, 0) of cos(angle(x_i) - angle(x_0) - angle(e_i)). Pairs with
/// a zero-magnitude bin on either side are left out of the mean; a bin with no
/// usable pair gets 0.
inline AngleFeature angle_feature(const MultichannelSpectrogram& spec, const SteeringField& sf) {
  if (spec.channels() != sf.mics) throw ShapeError("angle feature: channel count does not match steering field");
  if (spec.bins() != sf.bins) throw ShapeError("angle feature: bin count does not match steering field");
  if (spec.channels() < 2) throw ShapeError("angle feature: at least two channels required");
  AngleFeature a;
  a.frames = spec.frames();
  a.bins = spec.bins();
  a.doa = sf.doa;
  a.values.assign(a.frames * a.bins, 0.0);
  for (std::size_t t = 0; t < a.frames; ++t) {
    for (std::size_t f = 0; f < a.bins; ++f) {
      const cdouble ref = spec(0, t, f);
      if (ref == cdouble{}) continue;
      double acc = 0;
      std::size_t used = 0;
      for (std::size_t i = 1; i < spec.channels(); ++i) {
        const cdouble xi = spec(i, t, f);
        if (xi == cdouble{}) continue;
        const cdouble z = xi * std::conj(ref) * std::conj(sf(i, f));
        acc += z.real() / std::abs(z);
        ++used;
      }
      if (used > 0) a(t, f) = std::clamp(acc / static_cast<double>(used), -1.0, 1.0);
    }
  }
  return a;
}

/// Zeroes target bins where the strongest competitor (among those more than
/// `theta_deg` away from the target DOA) is at least as large. Ties zero the bin.
inline AngleFeature pre_mask(const AngleFeature& target, std::span<const AngleFeature> competitors,
                             double theta_deg = 30.0) {
  std::vector<const AngleFeature*> active;
  for (const auto& c : competitors) {
    if (c.frames != target.frames || c.bins != target.bins) throw ShapeError("pre-mask: shape mismatch");
    if (angular_distance(c.doa, target.doa) > theta_deg) active.push_back(&c);
  }
  AngleFeature out = target;
  if (active.empty()) return out;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    double strongest = -std::numeric_limits<double>::infinity();
    for (const auto* c : active) strongest = std::max(strongest, c->values[k]);
    if (!(target.values[k] > strongest)) out.values[k] = 0.0;
  }
  return out;
}

inline constexpr std::size_t kEmbeddingDim = 128;

struct SpeakerEmbedding {
  std::array<float, kEmbeddingDim> vector{};
  std::string source_id;
};

// Sidecar: exactly 128 little-endian float32 values, no header.
inline SpeakerEmbedding load_embedding(const std::filesystem::path& path) {
  auto in = io::ByteReader::from_file(path);
  if (in.remaining() != kEmbeddingDim * 4)
    throw FormatError("embedding", "sidecar must hold exactly 128 float32 values: " + path.string());
  SpeakerEmbedding e;
  for (auto& v : e.vector) {
    v = in.f32("embedding");
    if (!std::isfinite(v)) throw FormatError("embedding", "non-finite component");
  }
  e.source_id = path.filename().string();
  return e;
}

inline void save_embedding(const std::filesystem::path& path, const SpeakerEmbedding& e) {
  io::ByteWriter w;
  for (float v : e.vector) w.f32(v);
  w.save(path);
}

// Per-channel mask-estimator input, (channel, frame, width) row-major.
struct MaskInputFeatures {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t width = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t m, std::size_t t) const {
    return {values.data() + (m * frames + t) * width, width};
  }
};

/// Shallow concatenation: for every channel and frame,
/// [ |x_m| (F) | IPD block | angle (F, optional) | embedding (128, optional) ].
/// The IPD, angle and embedding blocks are identical across channels.
inline MaskInputFeatures assemble_mask_input(const MultichannelSpectrogram& spec, const IpdFeature& ipd,
                                             const AngleFeature* angle = nullptr,
                                             const SpeakerEmbedding* emb = nullptr) {
  const std::size_t frames = spec.frames(), bins = spec.bins();
  if (ipd.frames != frames || ipd.bins != bins) throw ShapeError("mask input: IPD shape mismatch");
  if (ipd.pairs + 1 != spec.channels()) throw ShapeError("mask input: IPD pair count mismatch");
  if (angle && (angle->frames != frames || angle->bins != bins))
    throw ShapeError("mask input: angle feature shape mismatch");

  MaskInputFeatures out;
  out.channels = spec.channels();
  out.frames = frames;
  out.width = bins + ipd.block_width() + (angle ? bins : 0) + (emb ? kEmbeddingDim : 0);
  out.values.resize(out.channels * frames * out.width);
  for (std::size_t m = 0; m < out.channels; ++m) {
    for (std::size_t t = 0; t < frames; ++t) {
      float* dst = out.values.data() + (m * frames + t) * out.width;
      for (std::size_t f = 0; f < bins; ++f) *dst++ = static_cast<float>(std::abs(spec(m, t, f)));
      for (std::size_t p = 0; p < ipd.pairs; ++p)
        for (std::size_t c = 0; c < ipd.components; ++c)
          for (std::size_t f = 0; f < bins; ++f) *dst++ = static_cast<float>(ipd(p, c, t, f));
      if (angle)
        for (std::size_t f = 0; f < bins; ++f) *dst++ = static_cast<float>((*angle)(t, f));
      if (emb)
        for (float v : emb->vector) *dst++ = v;
    }
  }
  return out;
}

}  // namespace mcfe
