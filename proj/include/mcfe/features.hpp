#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcfe/binary_io.hpp"
#include "mcfe/raster.hpp"
#include "mcfe/stft.hpp"

namespace mcfe {

// Dense (frames x dims) real feature matrix.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t t, std::size_t d, double fill = 0.0) : frames(t), dims(d), values(t * d, fill) {}

  double& operator()(std::size_t t, std::size_t d) { return values[t * dims + d]; }
  double operator()(std::size_t t, std::size_t d) const { return values[t * dims + d]; }
  std::span<const double> row(std::size_t t) const { return {values.data() + t * dims, dims}; }
};

inline double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

struct MelConfig {
  std::size_t num_mels = 80;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;
};

/// HTK-style triangular filters on the mel axis, (mel, bin) row-major. Adjacent
/// triangles cross at half height, so between the first and last centers the
/// weights of every bin sum to one.
inline std::vector<double> mel_filterbank(const StftConfig& cfg, const MelConfig& mel = {}) {
  if (mel.num_mels == 0) throw Error("mel: num_mels must be positive");
  if (!(mel.high_hz > mel.low_hz) || mel.high_hz > cfg.sample_rate / 2 + 1e-9)
    throw Error("mel: invalid frequency range");
  const std::size_t bins = cfg.num_bins();
  const double lo = hz_to_mel(mel.low_hz), hi = hz_to_mel(mel.high_hz);
  const double step = (hi - lo) / static_cast<double>(mel.num_mels + 1);
  std::vector<double> fb(mel.num_mels * bins, 0.0);
  for (std::size_t k = 0; k < mel.num_mels; ++k) {
    const double left = lo + step * static_cast<double>(k);
    const double center = left + step, right = center + step;
    for (std::size_t f = 0; f < bins; ++f) {
      const double m = hz_to_mel(cfg.bin_hz(f));
      double w = 0;
      if (m > left && m <= center) w = (m - left) / step;
      else if (m > center && m < right) w = (right - m) / step;
      fb[k * bins + f] = w;
    }
  }
  return fb;
}

/// log(filterbank * |O|^2 + floor) per frame of a single-channel spectrogram.
inline FeatureMatrix log_mel(const MultichannelSpectrogram& spec, const MelConfig& mel = {}) {
  if (spec.channels() != 1) throw ShapeError("log mel: expects a single-channel spectrogram");
  const auto fb = mel_filterbank(spec.config(), mel);
  if (fb.size() != mel.num_mels * spec.bins()) throw ShapeError("log mel: filterbank does not match bins");
  FeatureMatrix out(spec.frames(), mel.num_mels);
  std::vector<double> power(spec.bins());
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) power[f] = std::norm(spec(0, t, f));
    for (std::size_t k = 0; k < mel.num_mels; ++k) {
      double e = 0;
      const double* row = fb.data() + k * spec.bins();
      for (std::size_t f = 0; f < spec.bins(); ++f) e += row[f] * power[f];
      out(t, k) = std::log(e + mel.log_floor);
    }
  }
  return out;
}

/// Superframe t' concatenates frames t'*stride .. t'*stride + P - 1; indices
/// past the end repeat the last frame. stride = 0 means stride = P.
inline FeatureMatrix frame2superframe(const FeatureMatrix& feat, std::size_t P = 3, std::size_t stride = 0) {
  if (P < 1) throw Error("superframe: P must be at least 1");
  if (feat.frames == 0) throw Error("superframe: empty input");
  if (stride == 0) stride = P;
  const std::size_t out_frames = (feat.frames + stride - 1) / stride;
  FeatureMatrix out(out_frames, feat.dims * P);
  for (std::size_t t = 0; t < out_frames; ++t)
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t src = std::min(t * stride + p, feat.frames - 1);
      std::copy_n(feat.values.begin() + static_cast<std::ptrdiff_t>(src * feat.dims), feat.dims,
                  out.values.begin() + static_cast<std::ptrdiff_t>(t * out.dims + p * feat.dims));
    }
  return out;
}

inline constexpr double kVarianceFloor = 1e-8;

struct GmvnStats {
  std::vector<double> mean;
  std::vector<double> variance;
  std::uint64_t frame_count = 0;
  std::string source_tag;

  std::size_t dims() const { return mean.size(); }
};

// Streaming mean / variance (Chan et al. pairwise merge of Welford states).
class GmvnAccumulator {
 public:
  void add(const FeatureMatrix& feat) {
    if (count_ == 0 && mean_.empty()) {
      mean_.assign(feat.dims, 0.0);
      m2_.assign(feat.dims, 0.0);
    }
    if (feat.dims != mean_.size()) throw ShapeError("gmvn stats: feature dimension changed within corpus");
    for (std::size_t t = 0; t < feat.frames; ++t) {
      ++count_;
      const double n = static_cast<double>(count_);
      for (std::size_t d = 0; d < feat.dims; ++d) {
        const double x = feat(t, d);
        const double delta = x - mean_[d];
        mean_[d] += delta / n;
        m2_[d] += delta * (x - mean_[d]);
      }
    }
  }

  void merge(const GmvnAccumulator& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    if (o.mean_.size() != mean_.size()) throw ShapeError("gmvn stats: dimension mismatch in merge");
    const double na = static_cast<double>(count_), nb = static_cast<double>(o.count_), n = na + nb;
    for (std::size_t d = 0; d < mean_.size(); ++d) {
      const double delta = o.mean_[d] - mean_[d];
      mean_[d] += delta * nb / n;
      m2_[d] += o.m2_[d] + delta * delta * na * nb / n;
    }
    count_ += o.count_;
  }

  GmvnStats finish(std::string tag = {}) const {
    if (count_ == 0) throw Error("gmvn stats: empty corpus");
    GmvnStats s;
    s.mean = mean_;
    s.variance.resize(mean_.size());
    for (std::size_t d = 0; d < mean_.size(); ++d)
      s.variance[d] = std::max(m2_[d] / static_cast<double>(count_), kVarianceFloor);
    s.frame_count = count_;
    s.source_tag = std::move(tag);
    return s;
  }

 private:
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

inline GmvnStats compute_gmvn_stats(const std::vector<FeatureMatrix>& corpus, std::string tag = {}) {
  if (corpus.empty()) throw Error("gmvn stats: empty corpus");
  GmvnAccumulator acc;
  for (const auto& f : corpus) acc.add(f);
  return acc.finish(std::move(tag));
}

/// (x - mean) / sqrt(variance) per dimension.
inline FeatureMatrix gmvn(const FeatureMatrix& feat, const GmvnStats& stats) {
  if (stats.dims() != feat.dims || stats.variance.size() != feat.dims) throw ShapeError("gmvn: dimension mismatch");
  FeatureMatrix out = feat;
  for (std::size_t t = 0; t < feat.frames; ++t)
    for (std::size_t d = 0; d < feat.dims; ++d)
      out(t, d) = (feat(t, d) - stats.mean[d]) / std::sqrt(stats.variance[d]);
  return out;
}

// GMV1: "GMV1" | u32 dim | f64 mean[dim] | f64 var[dim] | u64 frame_count
inline void save_gmvn_stats(const GmvnStats& s, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.bytes("GMV1");
  w.u32(static_cast<std::uint32_t>(s.dims()));
  for (double v : s.mean) w.f64(v);
  for (double v : s.variance) w.f64(v);
  w.u64(s.frame_count);
  w.save(path);
}

inline GmvnStats load_gmvn_stats(const std::filesystem::path& path) {
  auto in = io::ByteReader::from_file(path);
  if (in.bytes(4, "magic") != "GMV1") throw FormatError("magic", "bad stats magic (expected GMV1)");
  const auto dim = in.u32("header");
  io::checked_payload({dim, 2}, 8, in.remaining(), "mean/variance");
  GmvnStats s;
  s.mean.resize(dim);
  s.variance.resize(dim);
  for (auto& v : s.mean) v = in.f64("mean");
  for (auto& v : s.variance) v = in.f64("variance");
  s.frame_count = in.u64("frame count");
  s.source_tag = path.filename().string();
  return s;
}

// Features as a Float32 raster of dims [frames, dims].
inline Raster features_to_raster(const FeatureMatrix& f) {
  Raster r;
  r.type = RasterType::Float32;
  r.dims = {f.frames, f.dims};
  r.real = f.values;
  return r;
}

inline FeatureMatrix features_from_raster(const Raster& r) {
  if (r.is_complex() || r.dims.size() != 2) throw FormatError("header", "feature raster must be real [frames, dims]");
  FeatureMatrix f(static_cast<std::size_t>(r.dims[0]), static_cast<std::size_t>(r.dims[1]));
  f.values = r.real;
  return f;
}

}  // namespace mcfe
