#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mcfe/binary_io.hpp"
#include "mcfe/stft.hpp"

namespace mcfe {

enum class WavEncoding { Pcm16, Float32 };

namespace detail {
constexpr std::uint16_t kWavPcm = 1;
constexpr std::uint16_t kWavFloat = 3;
constexpr std::uint16_t kWavExtensible = 0xFFFE;
}  // namespace detail

// Interleaved RIFF/WAVE, PCM 16-bit or IEEE float 32-bit. WAVE_FORMAT_EXTENSIBLE
// headers are accepted on read.
inline MultichannelPcm read_wav(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  if (r.bytes(4, "riff header") != "RIFF") throw FormatError("riff header", "not a RIFF file: " + path.string());
  r.u32("riff header");
  if (r.bytes(4, "riff header") != "WAVE") throw FormatError("riff header", "not a WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::string id = r.bytes(4, "chunk header");
    const std::uint32_t size = r.u32("chunk header");
    if (id == "fmt ") {
      r.need(size, "fmt chunk");
      format = r.u16("fmt chunk");
      channels = r.u16("fmt chunk");
      rate = r.u32("fmt chunk");
      r.u32("fmt chunk");
      r.u16("fmt chunk");
      bits = r.u16("fmt chunk");
      std::size_t used = 16;
      if (format == detail::kWavExtensible && size >= 40) {
        r.u16("fmt chunk");  // cbSize
        r.u16("fmt chunk");  // valid bits
        r.u32("fmt chunk");  // channel mask
        format = r.u16("fmt chunk");  // first two bytes of the subformat GUID
        used = 26;
      }
      r.skip(size - used + (size & 1u), "fmt chunk");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk", "data chunk before fmt chunk");
      if (channels == 0) throw FormatError("fmt chunk", "zero channels");
      const bool pcm16 = format == detail::kWavPcm && bits == 16;
      const bool f32 = format == detail::kWavFloat && bits == 32;
      if (!pcm16 && !f32)
        throw FormatError("fmt chunk", "unsupported encoding (format " + std::to_string(format) + ", " +
                                           std::to_string(bits) + " bits)");
      const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
      const std::size_t avail = std::min<std::size_t>(size, r.remaining());
      const std::size_t frames = avail / frame_bytes;
      MultichannelPcm pcm(channels, frames, static_cast<double>(rate));
      for (std::size_t n = 0; n < frames; ++n)
        for (std::size_t m = 0; m < channels; ++m)
          pcm[m][n] = pcm16 ? r.i16("data chunk") / 32768.0 : static_cast<double>(r.f32("data chunk"));
      return pcm;
    } else {
      r.skip(std::min<std::size_t>(size + (size & 1u), r.remaining()), "chunk body");
    }
  }
  throw FormatError("data chunk", "no data chunk in " + path.string());
}

inline void write_wav(const std::filesystem::path& path, const MultichannelPcm& pcm,
                      WavEncoding enc = WavEncoding::Float32) {
  pcm.validate();
  const std::uint16_t channels = static_cast<std::uint16_t>(pcm.num_channels());
  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(pcm.sample_rate));
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(pcm.num_samples() * channels * (bits / 8));
  const bool is_float = enc == WavEncoding::Float32;
  const std::uint32_t fmt_size = is_float ? 18 : 16;

  io::ByteWriter w;
  w.bytes("RIFF");
  w.u32(4 + (8 + fmt_size) + (is_float ? 12 : 0) + 8 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(fmt_size);
  w.u16(is_float ? detail::kWavFloat : detail::kWavPcm);
  w.u16(channels);
  w.u32(rate);
  w.u32(rate * channels * (bits / 8));
  w.u16(static_cast<std::uint16_t>(channels * (bits / 8)));
  w.u16(bits);
  if (is_float) {
    w.u16(0);
    w.bytes("fact");
    w.u32(4);
    w.u32(static_cast<std::uint32_t>(pcm.num_samples()));
  }
  w.bytes("data");
  w.u32(data_bytes);
  for (std::size_t n = 0; n < pcm.num_samples(); ++n) {
    for (std::size_t m = 0; m < channels; ++m) {
      const double v = pcm[m][n];
      if (is_float) {
        w.f32(static_cast<float>(v));
      } else {
        const double s = std::clamp(std::round(v * 32767.0), -32768.0, 32767.0);
        w.i16(static_cast<std::int16_t>(s));
      }
    }
  }
  w.save(path);
}

}  // namespace mcfe
