#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "mcfe/masks.hpp"
#include "mcfe/raster.hpp"
#include "mcfe/stft.hpp"

namespace mcfe {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Speech and noise spatial covariance matrices, one M x M pair per bin.
struct PsdPair {
  std::vector<CMatrix> speech;
  std::vector<CMatrix> noise;

  std::size_t bins() const { return speech.size(); }
  std::size_t channels() const { return speech.empty() ? 0 : static_cast<std::size_t>(speech.front().rows()); }
};

struct PsdOptions {
  // Divide each PSD by the summed mask weight of its bin.
  bool normalize_by_mask_sum = false;
};

namespace detail {

inline CMatrix masked_covariance(const MultichannelSpectrogram& spec, const std::vector<float>& mask,
                                 std::size_t f, bool normalize) {
  const auto m_count = static_cast<Eigen::Index>(spec.channels());
  CMatrix phi = CMatrix::Zero(m_count, m_count);
  double weight_sum = 0;
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    const double w = mask[t * spec.bins() + f];
    if (w == 0.0) continue;
    weight_sum += w;
    for (Eigen::Index i = 0; i < m_count; ++i) {
      const cdouble xi = spec(static_cast<std::size_t>(i), t, f);
      for (Eigen::Index j = i; j < m_count; ++j)
        phi(i, j) += w * xi * std::conj(spec(static_cast<std::size_t>(j), t, f));
    }
  }
  for (Eigen::Index i = 0; i < m_count; ++i) {
    phi(i, i) = phi(i, i).real();
    for (Eigen::Index j = i + 1; j < m_count; ++j) phi(j, i) = std::conj(phi(i, j));
  }
  if (normalize && weight_sum > 0) phi /= weight_sum;
  return phi;
}

}  // namespace detail

/// Phi_v(f) = sum_t M_v(t,f) x(t,f) x(t,f)^H for the speech and noise heads.
/// Only the upper triangle is accumulated; the lower one is its conjugate
/// mirror, so the result is exactly Hermitian.
inline PsdPair estimate_psd(const MultichannelSpectrogram& spec, const TwoHeadMask& mask,
                            const PsdOptions& opts = {}) {
  if (mask.channels != 1) throw ShapeError("psd: mask must be channel-averaged");
  if (mask.frames != spec.frames() || mask.bins != spec.bins()) throw ShapeError("psd: mask shape mismatch");
  if (!spec.all_finite()) throw Error("psd: non-finite spectrogram");
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (!std::isfinite(mask.speech[k]) || !std::isfinite(mask.noise[k])) throw Error("psd: non-finite mask");

  PsdPair psd;
  psd.speech.reserve(spec.bins());
  psd.noise.reserve(spec.bins());
  for (std::size_t f = 0; f < spec.bins(); ++f) {
    psd.speech.push_back(detail::masked_covariance(spec, mask.speech, f, opts.normalize_by_mask_sum));
    psd.noise.push_back(detail::masked_covariance(spec, mask.noise, f, opts.normalize_by_mask_sum));
  }
  return psd;
}

struct BeamformerWeights {
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::size_t reference = 0;
  std::vector<cdouble> w;                 // (bin, channel)
  std::vector<std::uint8_t> fallback;     // 1 where the bin fell back to pass-through

  cdouble operator()(std::size_t f, std::size_t m) const { return w[f * channels + m]; }
  cdouble& operator()(std::size_t f, std::size_t m) { return w[f * channels + m]; }
  std::size_t fallback_count() const {
    std::size_t n = 0;
    for (auto b : fallback) n += b;
    return n;
  }

  static BeamformerWeights pass_through(std::size_t channels, std::size_t bins, std::size_t reference) {
    BeamformerWeights bw;
    bw.channels = channels;
    bw.bins = bins;
    bw.reference = reference;
    bw.w.assign(channels * bins, cdouble{});
    bw.fallback.assign(bins, 0);
    for (std::size_t f = 0; f < bins; ++f) bw(f, reference) = 1.0;
    return bw;
  }
};

struct MvdrOptions {
  std::size_t reference = 0;
  // Loading added to Phi_N is diag_load * trace(Phi_N) / M.
  double diag_load = 1e-6;
  // Pick the reference channel that maximizes the output SNR summed over bins.
  bool select_reference = false;
};

namespace detail {

// Phi_N^{-1} Phi_S per bin via a Hermitian (Cholesky) solve, or nothing when
// the bin is degenerate.
inline std::optional<CMatrix> noise_whitened_speech(const CMatrix& phi_s, const CMatrix& phi_n, double diag_load) {
  const auto m = phi_n.rows();
  const double tr = phi_n.trace().real();
  if (!std::isfinite(tr) || !(tr > 0)) return std::nullopt;
  CMatrix loaded = phi_n;
  loaded.diagonal().array() += diag_load * tr / static_cast<double>(m);
  Eigen::LLT<CMatrix> llt(loaded);
  if (llt.info() != Eigen::Success) return std::nullopt;
  CMatrix x = llt.solve(phi_s);
  if (!x.allFinite()) return std::nullopt;
  const cdouble trace = x.trace();
  if (!(std::abs(trace) > 1e-300) || !std::isfinite(trace.real()) || !std::isfinite(trace.imag()))
    return std::nullopt;
  return CMatrix(x / trace);
}

}  // namespace detail

/// w(f) = (Phi_N^{-1} Phi_S / Tr(Phi_N^{-1} Phi_S)) u. Bins where Phi_N is
/// singular after loading, or where the trace vanishes, fall back to w = u and
/// are flagged.
inline BeamformerWeights mvdr_weights(const PsdPair& psd, const MvdrOptions& opts = {}) {
  const std::size_t channels = psd.channels(), bins = psd.bins();
  if (psd.noise.size() != bins) throw ShapeError("mvdr: speech/noise bin counts differ");
  if (opts.reference >= channels) throw ShapeError("mvdr: reference channel out of range");

  std::vector<std::optional<CMatrix>> ratio(bins);
  for (std::size_t f = 0; f < bins; ++f) ratio[f] = detail::noise_whitened_speech(psd.speech[f], psd.noise[f], opts.diag_load);

  std::size_t ref = opts.reference;
  if (opts.select_reference) {
    double best = -1;
    for (std::size_t u = 0; u < channels; ++u) {
      double num = 0, den = 0;
      for (std::size_t f = 0; f < bins; ++f) {
        if (!ratio[f]) continue;
        const CVector w = ratio[f]->col(static_cast<Eigen::Index>(u));
        num += (w.adjoint() * psd.speech[f] * w)(0, 0).real();
        den += (w.adjoint() * psd.noise[f] * w)(0, 0).real();
      }
      const double snr = den > 0 ? num / den : 0.0;
      if (snr > best) {
        best = snr;
        ref = u;
      }
    }
  }

  auto out = BeamformerWeights::pass_through(channels, bins, ref);
  for (std::size_t f = 0; f < bins; ++f) {
    if (!ratio[f]) {
      out.fallback[f] = 1;
      continue;
    }
    for (std::size_t m = 0; m < channels; ++m)
      out(f, m) = (*ratio[f])(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(ref));
  }
  return out;
}

/// o(t,f) = w(f)^H x(t,f).
inline MultichannelSpectrogram apply_beamformer(const MultichannelSpectrogram& spec, const BeamformerWeights& w) {
  if (spec.channels() != w.channels) throw ShapeError("beamformer: channel count mismatch");
  if (spec.bins() != w.bins) throw ShapeError("beamformer: bin count mismatch");
  MultichannelSpectrogram out(1, spec.frames(), spec.config(), spec.num_samples());
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      cdouble acc{};
      for (std::size_t m = 0; m < spec.channels(); ++m) acc += std::conj(w(f, m)) * spec(m, t, f);
      out(0, t, f) = acc;
    }
  }
  return out;
}

// Weights as a Complex64 raster of dims [bins, channels].
inline Raster weights_to_raster(const BeamformerWeights& w) {
  Raster r;
  r.type = RasterType::Complex64;
  r.dims = {w.bins, w.channels};
  r.complex = w.w;
  return r;
}

inline BeamformerWeights weights_from_raster(const Raster& r, std::size_t reference = 0) {
  if (!r.is_complex() || r.dims.size() != 2) throw FormatError("header", "weights raster must be complex [bins, channels]");
  BeamformerWeights w;
  w.bins = static_cast<std::size_t>(r.dims[0]);
  w.channels = static_cast<std::size_t>(r.dims[1]);
  w.reference = reference;
  w.w = r.complex;
  w.fallback.assign(w.bins, 0);
  return w;
}

}  // namespace mcfe
