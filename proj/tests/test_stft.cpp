#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

#include "mcfe/stft.hpp"
#include "mcfe/wav.hpp"
#include "test_util.hpp"

using namespace mcfe;
using mcfe::testing::random_pcm;

namespace {

// Direct O(N^2) DFT of one centered, Hann-windowed frame.
std::vector<cdouble> direct_frame_dft(const std::vector<double>& x, std::size_t t, const StftConfig& cfg) {
  const std::size_t n = cfg.fft_size;
  std::vector<cdouble> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    cdouble acc{};
    for (std::size_t i = 0; i < n; ++i) {
      const long idx = static_cast<long>(t * cfg.hop + i) - static_cast<long>(n / 2);
      if (idx < 0 || idx >= static_cast<long>(x.size())) continue;
      const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / n);
      acc += x[static_cast<std::size_t>(idx)] * w * std::polar(1.0, -2 * std::numbers::pi * k * i / n);
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST(Stft, DefaultConfigHas257Bins) {
  StftConfig cfg;
  EXPECT_EQ(cfg.num_bins(), 257u);
  EXPECT_EQ(cfg.hop, 160u);
}

TEST(Stft, ZeroSignalGivesZeroSpectrogram) {
  MultichannelPcm pcm(1, 4000, 16000);
  const auto spec = stft(pcm, {});
  for (const auto& c : spec.data()) EXPECT_EQ(c, cdouble{});
}

TEST(Stft, SineConcentratesAtExpectedBin) {
  std::vector<double> x(16000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2 * std::numbers::pi * 1000.0 * n / 16000.0);
  const auto spec = stft(MultichannelPcm::mono(x, 16000), {});
  const std::size_t t = spec.frames() / 2;
  std::size_t peak = 0;
  for (std::size_t f = 0; f < spec.bins(); ++f)
    if (std::abs(spec(0, t, f)) > std::abs(spec(0, t, peak))) peak = f;
  EXPECT_EQ(peak, 32u);
}

TEST(Stft, MatchesDirectDft) {
  const auto pcm = random_pcm(7, 16000, 3);
  StftConfig cfg;
  const auto spec = stft(pcm, cfg);
  EXPECT_EQ(spec.frames(), 1 + 16000 / 160);
  for (std::size_t m : {0u, 3u, 6u}) {
    for (std::size_t t : {0ul, 1ul, 50ul, spec.frames() - 1}) {
      const auto ref = direct_frame_dft(pcm[m], t, cfg);
      for (std::size_t f = 0; f < spec.bins(); ++f) EXPECT_NEAR(std::abs(spec(m, t, f) - ref[f]), 0.0, 1e-9);
    }
  }
}

TEST(Stft, EdgeBinsAreReal) {
  const auto spec = stft(random_pcm(2, 3000, 5), {});
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      EXPECT_EQ(spec(m, t, 0).imag(), 0.0);
      EXPECT_EQ(spec(m, t, spec.bins() - 1).imag(), 0.0);
    }
}

TEST(Stft, ParsevalPerFrame) {
  const auto pcm = random_pcm(7, 16000, 11);
  StftConfig cfg;
  const auto spec = stft(pcm, cfg);
  const auto w = make_window(WindowType::Hann, cfg.fft_size);
  for (std::size_t m = 0; m < 7; ++m) {
    for (std::size_t t = 2; t < spec.frames() - 4; t += 7) {
      double time_energy = 0;
      for (std::size_t i = 0; i < cfg.fft_size; ++i) {
        const long idx = static_cast<long>(t * cfg.hop + i) - 256;
        const double v = pcm[m][static_cast<std::size_t>(idx)] * w[i];
        time_energy += v * v;
      }
      double spec_energy = 0;
      for (std::size_t f = 0; f < spec.bins(); ++f) {
        const double weight = (f == 0 || f == spec.bins() - 1) ? 1.0 : 2.0;
        spec_energy += weight * std::norm(spec(m, t, f));
      }
      spec_energy /= static_cast<double>(cfg.fft_size);
      EXPECT_NEAR(spec_energy / time_energy, 1.0, 1e-6);
    }
  }
}

TEST(Stft, RoundTripReconstructs) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pcm = random_pcm(3, 12345, seed);
    const auto back = istft(stft(pcm, {}));
    ASSERT_EQ(back.num_samples(), pcm.num_samples());
    for (std::size_t m = 0; m < 3; ++m) {
      const double peak = mcfe::testing::max_abs(pcm[m]);
      for (std::size_t n = 0; n < pcm.num_samples(); ++n) ASSERT_NEAR(back[m][n], pcm[m][n], 1e-6 * peak);
    }
  }
}

TEST(Stft, RoundTripOtherWindowsAndHops) {
  for (auto w : {WindowType::Hamming, WindowType::Rectangular}) {
    StftConfig cfg;
    cfg.window = w;
    cfg.fft_size = 256;
    cfg.hop = 64;
    const auto pcm = random_pcm(1, 5000, 9);
    const auto back = istft(stft(pcm, cfg));
    for (std::size_t n = 0; n < 5000; ++n) ASSERT_NEAR(back[0][n], pcm[0][n], 1e-9);
  }
}

TEST(Stft, Linearity) {
  const auto x = random_pcm(2, 4000, 21);
  const auto y = random_pcm(2, 4000, 22);
  MultichannelPcm z(2, 4000, 16000);
  const double a = 0.7, b = -1.9;
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n = 0; n < 4000; ++n) z[m][n] = a * x[m][n] + b * y[m][n];
  const auto sx = stft(x, {}), sy = stft(y, {}), sz = stft(z, {});
  double scale = 0;
  for (const auto& c : sz.data()) scale = std::max(scale, std::abs(c));
  for (std::size_t k = 0; k < sz.data().size(); ++k)
    ASSERT_LE(std::abs(sz.data()[k] - (a * sx.data()[k] + b * sy.data()[k])), 1e-10 * scale);
}

TEST(Istft, ZeroSpectrogramGivesSilence) {
  MultichannelSpectrogram spec(2, 20, StftConfig{}, 3040);
  const auto pcm = istft(spec);
  EXPECT_EQ(pcm.num_samples(), 3040u);
  for (const auto& ch : pcm.channels)
    for (double v : ch) EXPECT_EQ(v, 0.0);
}

TEST(Istft, SingleFrameImpulseMatchesDirectInverseDft) {
  StftConfig cfg;
  cfg.center_padding = false;
  const std::size_t n = cfg.fft_size, n0 = 200;
  MultichannelSpectrogram spec(1, 1, cfg, n);
  for (std::size_t k = 0; k < spec.bins(); ++k) spec(0, 0, k) = std::polar(1.0, -2 * std::numbers::pi * k * n0 / n);
  const auto out = istft(spec);
  for (std::size_t i = 0; i < n; ++i) {
    // Direct inverse DFT of the one-sided spectrum.
    double v = 0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
      const double weight = (k == 0 || k == n / 2) ? 1.0 : 2.0;
      v += weight * (spec(0, 0, k) * std::polar(1.0, 2 * std::numbers::pi * k * i / n)).real();
    }
    v /= static_cast<double>(n);
    const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / n);
    const double expected = w * w > 1e-10 ? v * w / (w * w) : 0.0;
    EXPECT_NEAR(out[0][i], expected, 1e-9) << i;
  }
  // One frame: the synthesis window divided by the squared-window norm leaves 1/w[n0].
  const double w0 = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n0 / n);
  EXPECT_NEAR(out[0][n0], 1.0 / w0, 1e-9);
}

TEST(Istft, RejectsNonFinite) {
  MultichannelSpectrogram spec(1, 5, StftConfig{}, 640);
  spec(0, 2, 3) = {std::nan(""), 0};
  EXPECT_THROW(istft(spec), Error);
}

TEST(Stft, Errors) {
  EXPECT_THROW(stft(MultichannelPcm{}, {}), Error);
  auto pcm = random_pcm(1, 100, 1, 8000);
  EXPECT_THROW(stft(pcm, {}), Error);
  StftConfig bad;
  bad.fft_size = 500;
  EXPECT_THROW(stft(random_pcm(1, 1000, 1), bad), Error);
  bad = {};
  bad.hop = 1024;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Wav, Float32RoundTripIsExactAtFloatPrecision) {
  auto pcm = random_pcm(7, 1000, 4);
  for (auto& ch : pcm.channels)
    for (double& v : ch) v = static_cast<float>(v * 0.1);
  const auto path = std::filesystem::temp_directory_path() / "mcfe_test_f32.wav";
  write_wav(path, pcm, WavEncoding::Float32);
  const auto back = read_wav(path);
  ASSERT_EQ(back.num_channels(), 7u);
  ASSERT_EQ(back.num_samples(), 1000u);
  EXPECT_EQ(back.sample_rate, 16000.0);
  EXPECT_EQ(back.channels, pcm.channels);
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
  auto pcm = random_pcm(2, 500, 8);
  for (auto& ch : pcm.channels)
    for (double& v : ch) v = std::clamp(v * 0.2, -0.99, 0.99);
  const auto path = std::filesystem::temp_directory_path() / "mcfe_test_i16.wav";
  write_wav(path, pcm, WavEncoding::Pcm16);
  const auto back = read_wav(path);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n = 0; n < 500; ++n) EXPECT_NEAR(back[m][n], pcm[m][n], 1.0 / 16384);
}

TEST(Wav, ReadsExtensibleHeader) {
  // Hand-assembled WAVE_FORMAT_EXTENSIBLE, 3 channels of 16-bit PCM, 2 frames.
  io::ByteWriter w;
  w.bytes("RIFF");
  w.u32(4 + 8 + 40 + 8 + 12);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(40);
  w.u16(0xFFFE);
  w.u16(3);
  w.u32(16000);
  w.u32(16000 * 6);
  w.u16(6);
  w.u16(16);
  w.u16(22);
  w.u16(16);
  w.u32(0x7);
  w.u16(1);  // KSDATAFORMAT_SUBTYPE_PCM
  w.bytes(std::string("\x00\x00\x00\x00\x10\x00\x80\x00\x00\xAA\x00\x38\x9B\x71", 14));
  w.bytes("data");
  w.u32(12);
  for (std::int16_t v : {1000, -1000, 0, 16384, -16384, 32767}) w.i16(v);
  const auto path = std::filesystem::temp_directory_path() / "mcfe_test_ext.wav";
  w.save(path);
  const auto pcm = read_wav(path);
  ASSERT_EQ(pcm.num_channels(), 3u);
  ASSERT_EQ(pcm.num_samples(), 2u);
  EXPECT_DOUBLE_EQ(pcm[1][1], -0.5);
  EXPECT_DOUBLE_EQ(pcm[0][1], 0.5);
}

TEST(Wav, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "mcfe_test_bad.wav";
  io::ByteWriter w;
  w.bytes("RIFX0000WAVE");
  w.save(path);
  EXPECT_THROW(read_wav(path), FormatError);
}
