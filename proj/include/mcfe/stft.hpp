#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mcfe/errors.hpp"
#include "mcfe/fft.hpp"

namespace mcfe {

enum class WindowType { Hann, Hamming, Rectangular };

inline std::string to_string(WindowType w) {
  switch (w) {
    case WindowType::Hann: return "hann";
    case WindowType::Hamming: return "hamming";
    case WindowType::Rectangular: return "rectangular";
  }
  return "unknown";
}

inline WindowType window_from_string(const std::string& name) {
  if (name == "hann") return WindowType::Hann;
  if (name == "hamming") return WindowType::Hamming;
  if (name == "rectangular" || name == "rect") return WindowType::Rectangular;
  throw Error("unknown window type: " + name);
}

// Periodic windows (DFT-even), length n.
inline std::vector<double> make_window(WindowType type, std::size_t n) {
  std::vector<double> w(n, 1.0);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(step * static_cast<double>(i));
    switch (type) {
      case WindowType::Hann: w[i] = 0.5 - 0.5 * c; break;
      case WindowType::Hamming: w[i] = 0.54 - 0.46 * c; break;
      case WindowType::Rectangular: break;
    }
  }
  return w;
}

struct StftConfig {
  double sample_rate = 16000.0;
  std::size_t fft_size = 512;
  std::size_t hop = 160;  // 10 ms at 16 kHz
  WindowType window = WindowType::Hann;
  bool center_padding = true;

  std::size_t num_bins() const { return fft_size / 2 + 1; }
  double bin_hz(std::size_t f) const {
    return static_cast<double>(f) * sample_rate / static_cast<double>(fft_size);
  }

  void validate() const {
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
      throw Error("stft: fft_size must be a power of two >= 2");
    if (hop == 0 || hop > fft_size) throw Error("stft: hop must be in [1, fft_size]");
    if (!(sample_rate > 0.0)) throw Error("stft: sample_rate must be positive");
  }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

// Real-valued samples per channel. All channels have equal length.
struct MultichannelPcm {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  MultichannelPcm() = default;
  MultichannelPcm(std::size_t num_channels, std::size_t num_samples, double rate)
      : channels(num_channels, std::vector<double>(num_samples, 0.0)), sample_rate(rate) {}

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
  bool empty() const { return channels.empty() || channels.front().empty(); }

  std::vector<double>& operator[](std::size_t m) { return channels[m]; }
  const std::vector<double>& operator[](std::size_t m) const { return channels[m]; }

  void validate() const {
    for (const auto& ch : channels) {
      if (ch.size() != num_samples()) throw ShapeError("pcm: channels differ in length");
      for (double v : ch)
        if (!std::isfinite(v)) throw Error("pcm: non-finite sample");
    }
  }

  static MultichannelPcm mono(std::vector<double> samples, double rate) {
    MultichannelPcm p;
    p.channels.push_back(std::move(samples));
    p.sample_rate = rate;
    return p;
  }
};

// Complex STFT indexed (channel, frame, bin), row-major with bins fastest.
class MultichannelSpectrogram {
 public:
  MultichannelSpectrogram() = default;
  MultichannelSpectrogram(std::size_t channels, std::size_t frames, StftConfig cfg,
                          std::size_t num_samples = 0)
      : channels_(channels),
        frames_(frames),
        bins_(cfg.num_bins()),
        config_(cfg),
        num_samples_(num_samples),
        data_(channels * frames * cfg.num_bins()) {}

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  const StftConfig& config() const { return config_; }
  // Length of the time-domain signal this spectrogram was computed from (0 if unknown).
  std::size_t num_samples() const { return num_samples_; }
  void set_num_samples(std::size_t n) { num_samples_ = n; }

  cdouble& operator()(std::size_t m, std::size_t t, std::size_t f) {
    return data_[(m * frames_ + t) * bins_ + f];
  }
  const cdouble& operator()(std::size_t m, std::size_t t, std::size_t f) const {
    return data_[(m * frames_ + t) * bins_ + f];
  }

  std::span<cdouble> frame(std::size_t m, std::size_t t) {
    return {data_.data() + (m * frames_ + t) * bins_, bins_};
  }
  std::span<const cdouble> frame(std::size_t m, std::size_t t) const {
    return {data_.data() + (m * frames_ + t) * bins_, bins_};
  }

  std::vector<cdouble>& data() { return data_; }
  const std::vector<cdouble>& data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](const cdouble& c) {
      return std::isfinite(c.real()) && std::isfinite(c.imag());
    });
  }

  // Single-channel view copy of channel m.
  MultichannelSpectrogram channel(std::size_t m) const {
    MultichannelSpectrogram out(1, frames_, config_, num_samples_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(m * frames_ * bins_), frames_ * bins_,
                out.data_.begin());
    return out;
  }

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  StftConfig config_;
  std::size_t num_samples_ = 0;
  std::vector<cdouble> data_;
};

inline std::size_t num_stft_frames(std::size_t num_samples, const StftConfig& cfg) {
  if (cfg.center_padding) return 1 + num_samples / cfg.hop;
  if (num_samples <= cfg.fft_size) return 1;
  return 1 + (num_samples - cfg.fft_size + cfg.hop - 1) / cfg.hop;
}

/// Forward STFT. With center padding, frame t is centered at sample t*hop and the
/// signal is zero-padded by fft_size/2 on both sides.
inline MultichannelSpectrogram stft(const MultichannelPcm& pcm, const StftConfig& cfg) {
  cfg.validate();
  if (pcm.empty()) throw Error("stft: empty input");
  if (pcm.sample_rate != cfg.sample_rate) throw Error("stft: sample-rate mismatch");
  pcm.validate();

  const std::size_t n = pcm.num_samples();
  const std::size_t nfft = cfg.fft_size;
  const std::size_t frames = num_stft_frames(n, cfg);
  const std::ptrdiff_t offset = cfg.center_padding ? static_cast<std::ptrdiff_t>(nfft / 2) : 0;
  const auto window = make_window(cfg.window, nfft);

  MultichannelSpectrogram spec(pcm.num_channels(), frames, cfg, n);
  std::vector<double> buf(nfft);
  for (std::size_t m = 0; m < pcm.num_channels(); ++m) {
    const auto& x = pcm[m];
    for (std::size_t t = 0; t < frames; ++t) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * cfg.hop) - offset;
      for (std::size_t i = 0; i < nfft; ++i) {
        const std::ptrdiff_t k = start + static_cast<std::ptrdiff_t>(i);
        buf[i] = (k >= 0 && k < static_cast<std::ptrdiff_t>(n)) ? x[static_cast<std::size_t>(k)] * window[i]
                                                                : 0.0;
      }
      auto out = spec.frame(m, t);
      rfft(buf, out);
      out.front().imag(0.0);
      out.back().imag(0.0);
    }
  }
  return spec;
}

/// Inverse STFT by weighted overlap-add with the analysis window as synthesis
/// window, normalized by the summed squared window. Throws if the window/hop
/// pair leaves an interior sample uncovered.
inline MultichannelPcm istft(const MultichannelSpectrogram& spec) {
  const StftConfig& cfg = spec.config();
  cfg.validate();
  if (!spec.all_finite()) throw Error("istft: non-finite spectrogram");
  const std::size_t nfft = cfg.fft_size;
  const std::size_t frames = spec.frames();
  const std::size_t padded = (frames - 1) * cfg.hop + nfft;
  const std::size_t offset = cfg.center_padding ? nfft / 2 : 0;
  std::size_t out_len = spec.num_samples();
  if (out_len == 0) out_len = cfg.center_padding ? (frames - 1) * cfg.hop : padded;
  if (out_len + offset > padded) throw ShapeError("istft: num_samples exceeds frame coverage");

  const auto window = make_window(cfg.window, nfft);
  std::vector<double> norm(padded, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < nfft; ++i) norm[t * cfg.hop + i] += window[i] * window[i];

  double peak_norm = *std::max_element(norm.begin(), norm.end());
  const double tiny = 1e-10 * peak_norm;
  for (std::size_t n = 0; n < out_len; ++n) {
    const std::size_t p = n + offset;
    if (norm[p] > tiny) continue;
    // Non-centered framing leaves the outermost samples uncovered by a
    // tapered window; only interior holes violate the reconstruction identity.
    const bool edge = p < nfft || p + nfft >= padded;
    if (!edge || cfg.center_padding)
      throw Error("istft: window/hop pair violates the overlap-add reconstruction identity");
  }

  MultichannelPcm pcm(spec.channels(), out_len, cfg.sample_rate);
  std::vector<double> acc(padded);
  std::vector<double> buf(nfft);
  for (std::size_t m = 0; m < spec.channels(); ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      irfft(spec.frame(m, t), buf);
      double* dst = acc.data() + t * cfg.hop;
      for (std::size_t i = 0; i < nfft; ++i) dst[i] += buf[i] * window[i];
    }
    auto& out = pcm[m];
    for (std::size_t n = 0; n < out_len; ++n) {
      const std::size_t p = n + offset;
      out[n] = norm[p] > tiny ? acc[p] / norm[p] : 0.0;
    }
  }
  return pcm;
}

}  // namespace mcfe
