#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mcfe/binary_io.hpp"
#include "mcfe/stft.hpp"

namespace mcfe {

// Paired speech / noise masks indexed (channel, frame, bin). After channel
// averaging the channel dimension is 1.
struct TwoHeadMask {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> speech;
  std::vector<float> noise;
  bool averaged = false;

  TwoHeadMask() = default;
  TwoHeadMask(std::size_t m, std::size_t t, std::size_t f, bool avg = false)
      : channels(m), frames(t), bins(f), speech(m * t * f, 0.f), noise(m * t * f, 0.f), averaged(avg) {}

  std::size_t index(std::size_t m, std::size_t t, std::size_t f) const { return (m * frames + t) * bins + f; }
  std::size_t size() const { return channels * frames * bins; }

  void validate(double tolerance = 0.0) const {
    if (speech.size() != size() || noise.size() != size()) throw ShapeError("mask: head sizes do not match shape");
    if (averaged && channels != 1) throw ShapeError("mask: averaged mask must have one channel");
    auto check = [tolerance](const std::vector<float>& head, const char* name) {
      for (float v : head)
        if (!(v >= -tolerance && v <= 1.0 + tolerance))
          throw Error(std::string("mask: ") + name + " value " + std::to_string(v) + " outside [0,1]");
    };
    check(speech, "speech");
    check(noise, "noise");
  }

  friend bool operator==(const TwoHeadMask&, const TwoHeadMask&) = default;
};

/// Ideal ratio mask from the two source images:
/// speech = |S|^p / (|S|^p + |N|^p + eps), noise = |N|^p / (...).
inline TwoHeadMask oracle_irm(const MultichannelSpectrogram& clean, const MultichannelSpectrogram& interference,
                              double exponent = 1.0, double eps = 1e-10) {
  if (clean.channels() != interference.channels() || clean.frames() != interference.frames() ||
      clean.bins() != interference.bins())
    throw ShapeError("oracle mask: clean and interference shapes differ");
  TwoHeadMask mask(clean.channels(), clean.frames(), clean.bins());
  const auto& s = clean.data();
  const auto& n = interference.data();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double ps = std::pow(std::abs(s[k]), exponent);
    const double pn = std::pow(std::abs(n[k]), exponent);
    const double denom = ps + pn + eps;
    mask.speech[k] = static_cast<float>(ps / denom);
    mask.noise[k] = static_cast<float>(pn / denom);
  }
  return mask;
}

/// Per-head arithmetic mean over channels.
inline TwoHeadMask average_masks(const TwoHeadMask& mask) {
  if (mask.averaged) throw Error("average masks: input is already averaged");
  TwoHeadMask out(1, mask.frames, mask.bins, true);
  const std::size_t plane = mask.frames * mask.bins;
  for (std::size_t k = 0; k < plane; ++k) {
    double s = 0, n = 0;
    for (std::size_t m = 0; m < mask.channels; ++m) {
      s += mask.speech[m * plane + k];
      n += mask.noise[m * plane + k];
    }
    out.speech[k] = static_cast<float>(std::clamp(s / static_cast<double>(mask.channels), 0.0, 1.0));
    out.noise[k] = static_cast<float>(std::clamp(n / static_cast<double>(mask.channels), 0.0, 1.0));
  }
  return out;
}

inline constexpr double kMaskFileTolerance = 1e-6;

// TFM1: "TFM1" | u32 M | u32 T | u32 F | u8 averaged | speech f32[M*T*F] | noise f32[M*T*F]
inline io::ByteWriter encode_masks(const TwoHeadMask& mask) {
  mask.validate(kMaskFileTolerance);
  io::ByteWriter w;
  w.bytes("TFM1");
  w.u32(static_cast<std::uint32_t>(mask.channels));
  w.u32(static_cast<std::uint32_t>(mask.frames));
  w.u32(static_cast<std::uint32_t>(mask.bins));
  w.u8(mask.averaged ? 1 : 0);
  for (float v : mask.speech) w.f32(v);
  for (float v : mask.noise) w.f32(v);
  return w;
}

inline void save_masks(const TwoHeadMask& mask, const std::filesystem::path& path) {
  encode_masks(mask).save(path);
}

inline TwoHeadMask decode_masks(io::ByteReader& in) {
  if (in.bytes(4, "magic") != "TFM1") throw FormatError("magic", "bad mask file magic (expected TFM1)");
  TwoHeadMask mask;
  mask.channels = in.u32("header");
  mask.frames = in.u32("header");
  mask.bins = in.u32("header");
  const auto flag = in.u8("header");
  if (flag > 1) throw FormatError("header", "averaged flag must be 0 or 1");
  mask.averaged = flag == 1;
  const std::size_t head_bytes =
      io::checked_payload({mask.channels, mask.frames, mask.bins}, 4, in.remaining(), "speech head");
  mask.speech.resize(head_bytes / 4);
  for (auto& v : mask.speech) v = in.f32("speech head");
  in.need(head_bytes, "noise head");
  mask.noise.resize(head_bytes / 4);
  for (auto& v : mask.noise) v = in.f32("noise head");
  try {
    mask.validate(kMaskFileTolerance);
  } catch (const Error& e) {
    throw FormatError("values", e.what());
  }
  return mask;
}

inline TwoHeadMask load_masks(const std::filesystem::path& path) {
  auto in = io::ByteReader::from_file(path);
  return decode_masks(in);
}

}  // namespace mcfe
