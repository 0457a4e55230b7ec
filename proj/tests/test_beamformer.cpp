#include <gtest/gtest.h>

#include <numbers>

#include "mcfe/beamformer.hpp"
#include "mcfe/metrics.hpp"
#include "mcfe/spatial.hpp"
#include "test_util.hpp"

using namespace mcfe;
using namespace mcfe::testing;

namespace {

CMatrix random_hermitian_pd(int m, std::uint64_t seed, int rank = -1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const int r = rank < 0 ? 2 * m : rank;
  CMatrix a(m, r);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < r; ++j) a(i, j) = {g(rng), g(rng)};
  return a * a.adjoint();
}

// Plain Gaussian elimination with partial pivoting on std::complex, solving A X = B.
std::vector<std::vector<cdouble>> gauss_solve(std::vector<std::vector<cdouble>> a, std::vector<std::vector<cdouble>> b) {
  const std::size_t n = a.size(), cols = b[0].size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const cdouble l = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= l * a[k][j];
      for (std::size_t j = 0; j < cols; ++j) b[i][j] -= l * b[k][j];
    }
  }
  std::vector<std::vector<cdouble>> x(n, std::vector<cdouble>(cols));
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = n; i-- > 0;) {
      cdouble s = b[i][j];
      for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k][j];
      x[i][j] = s / a[i][i];
    }
  return x;
}

std::vector<std::vector<cdouble>> to_rows(const CMatrix& m) {
  std::vector<std::vector<cdouble>> r(static_cast<std::size_t>(m.rows()), std::vector<cdouble>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return r;
}

PsdPair single_bin(const CMatrix& s, const CMatrix& n) {
  PsdPair p;
  p.speech = {s};
  p.noise = {n};
  return p;
}

CVector weight_vector(const BeamformerWeights& w, std::size_t f) {
  CVector v(static_cast<Eigen::Index>(w.channels));
  for (std::size_t m = 0; m < w.channels; ++m) v(static_cast<Eigen::Index>(m)) = w(f, m);
  return v;
}

}  // namespace

TEST(Mvdr, SingleChannelIsUnity) {
  CMatrix s(1, 1), n(1, 1);
  s(0, 0) = 4.0;
  n(0, 0) = 0.5;
  const auto w = mvdr_weights(single_bin(s, n));
  EXPECT_NEAR(std::abs(w(0, 0) - 1.0), 0.0, 1e-12);
  EXPECT_EQ(w.fallback_count(), 0u);
}

TEST(Mvdr, RankOneSpeechWithWhiteNoiseClosedForm) {
  const int m = 4;
  CVector d(m);
  d << cdouble(1, 0), cdouble(0.3, -0.8), cdouble(-0.5, 0.2), cdouble(0.1, 0.9);
  const CMatrix s = 2.5 * d * d.adjoint();
  const auto w = mvdr_weights(single_bin(s, CMatrix::Identity(m, m)));
  // w = d conj(d_0) / |d|^2
  for (int i = 0; i < m; ++i)
    EXPECT_NEAR(std::abs(w(0, static_cast<std::size_t>(i)) - d(i) * std::conj(d(0)) / d.squaredNorm()), 0.0, 1e-12);
}

TEST(Mvdr, MatchesHandWrittenGaussianElimination) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CMatrix s = random_hermitian_pd(4, seed * 2);
    const CMatrix n = random_hermitian_pd(4, seed * 2 + 1);
    MvdrOptions opts;
    opts.reference = seed % 4;
    const auto w = mvdr_weights(single_bin(s, n), opts);

    CMatrix loaded = n;
    const double load = opts.diag_load * n.trace().real() / 4.0;
    for (int i = 0; i < 4; ++i) loaded(i, i) += load;
    const auto x = gauss_solve(to_rows(loaded), to_rows(s));
    cdouble tr{};
    for (std::size_t i = 0; i < 4; ++i) tr += x[i][i];
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(std::abs(w(0, i) - x[i][opts.reference] / tr), 0.0, 1e-8);
  }
}

TEST(Mvdr, DistortionlessTowardRankOneSpeech) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CMatrix n = random_hermitian_pd(5, seed + 10);
    const CMatrix dm = random_hermitian_pd(5, seed + 20, 1);
    // Recover d from the rank-1 matrix: column 0 divided by sqrt(dm(0,0)).
    const CVector d = dm.col(0) / std::sqrt(dm(0, 0).real());
    MvdrOptions opts;
    opts.reference = 2;
    const auto w = mvdr_weights(single_bin(dm, n), opts);
    const cdouble response = weight_vector(w, 0).adjoint() * d;
    EXPECT_NEAR(std::abs(response - d(2)), 0.0, 1e-10 * std::abs(d(2)) + 1e-12);
  }
}

TEST(Mvdr, ScaleEquivariance) {
  const CMatrix s = random_hermitian_pd(3, 41), n = random_hermitian_pd(3, 42);
  const auto a = mvdr_weights(single_bin(s, n));
  const auto b = mvdr_weights(single_bin(7.0 * s, 0.01 * n));
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(std::abs(a(0, m) - b(0, m)), 0.0, 1e-10);
}

TEST(Mvdr, DegenerateBinsFallBackToPassThrough) {
  PsdPair p;
  p.speech = {random_hermitian_pd(3, 1), CMatrix::Zero(3, 3), random_hermitian_pd(3, 2)};
  p.noise = {CMatrix::Zero(3, 3), random_hermitian_pd(3, 3), random_hermitian_pd(3, 4)};
  MvdrOptions opts;
  opts.reference = 1;
  const auto w = mvdr_weights(p, opts);
  EXPECT_EQ(w.fallback, (std::vector<std::uint8_t>{1, 1, 0}));
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(w(f, m), m == 1 ? cdouble(1.0) : cdouble(0.0));
  for (auto c : w.w) EXPECT_TRUE(std::isfinite(c.real()) && std::isfinite(c.imag()));

  CMatrix nan_noise = random_hermitian_pd(3, 5);
  nan_noise(0, 0) = std::nan("");
  EXPECT_EQ(mvdr_weights(single_bin(p.speech[0], nan_noise)).fallback_count(), 1u);
  MvdrOptions bad;
  bad.reference = 3;
  EXPECT_THROW(mvdr_weights(p, bad), ShapeError);
}

TEST(Mvdr, SelectReferencePicksBestChannel) {
  // Speech only reaches channel 2; noise is white.
  CMatrix s = CMatrix::Zero(3, 3);
  s(2, 2) = 1.0;
  s(1, 1) = 0.01;
  MvdrOptions opts;
  opts.select_reference = true;
  PsdPair p;
  for (int f = 0; f < 4; ++f) {
    p.speech.push_back(s);
    p.noise.push_back(CMatrix::Identity(3, 3));
  }
  EXPECT_EQ(mvdr_weights(p, opts).reference, 2u);
}

TEST(Psd, MatchesTripleLoopAndIsHermitian) {
  const auto spec = stft(random_pcm(4, 3200, 8), {});
  TwoHeadMask mask(1, spec.frames(), spec.bins(), true);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    mask.speech[k] = u(rng);
    mask.noise[k] = u(rng);
  }
  const auto psd = estimate_psd(spec, mask);
  ASSERT_EQ(psd.bins(), spec.bins());
  ASSERT_EQ(psd.channels(), 4u);
  for (std::size_t f : {0ul, 17ul, 128ul, 256ul}) {
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        cdouble s{}, n{};
        for (std::size_t t = 0; t < spec.frames(); ++t) {
          const cdouble xx = spec(i, t, f) * std::conj(spec(j, t, f));
          s += static_cast<double>(mask.speech[t * spec.bins() + f]) * xx;
          n += static_cast<double>(mask.noise[t * spec.bins() + f]) * xx;
        }
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        EXPECT_NEAR(std::abs(psd.speech[f](ii, jj) - s), 0.0, 1e-12 * psd.speech[f].norm());
        EXPECT_NEAR(std::abs(psd.noise[f](ii, jj) - n), 0.0, 1e-12 * psd.noise[f].norm());
      }
    EXPECT_TRUE(psd.speech[f] == psd.speech[f].adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(psd.noise[f]);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9 * psd.noise[f].trace().real());
  }
}

TEST(Psd, ZeroMaskGivesZeroAndShapeChecks) {
  const auto spec = stft(random_pcm(2, 1600, 1), {});
  TwoHeadMask mask(1, spec.frames(), spec.bins(), true);
  const auto psd = estimate_psd(spec, mask);
  for (const auto& m : psd.speech) EXPECT_EQ(m.norm(), 0.0);
  EXPECT_EQ(mvdr_weights(psd).fallback_count(), spec.bins());
  EXPECT_THROW(estimate_psd(spec, TwoHeadMask(2, spec.frames(), spec.bins())), ShapeError);
  EXPECT_THROW(estimate_psd(spec, TwoHeadMask(1, spec.frames() + 1, spec.bins(), true)), ShapeError);
}

TEST(Psd, NormalizedByMaskSum) {
  const auto spec = stft(random_pcm(2, 1600, 2), {});
  TwoHeadMask mask(1, spec.frames(), spec.bins(), true);
  std::fill(mask.speech.begin(), mask.speech.end(), 0.5f);
  std::fill(mask.noise.begin(), mask.noise.end(), 0.5f);
  const auto raw = estimate_psd(spec, mask);
  const auto norm = estimate_psd(spec, mask, {.normalize_by_mask_sum = true});
  const double sum = 0.5 * static_cast<double>(spec.frames());
  EXPECT_NEAR((raw.speech[40] / sum - norm.speech[40]).norm(), 0.0, 1e-12 * raw.speech[40].norm());
}

TEST(Beamformer, PassThroughReturnsReferenceChannel) {
  const auto spec = stft(random_pcm(3, 2000, 4), {});
  const auto out = apply_beamformer(spec, BeamformerWeights::pass_through(3, spec.bins(), 2));
  ASSERT_EQ(out.channels(), 1u);
  for (std::size_t t = 0; t < spec.frames(); ++t)
    for (std::size_t f = 0; f < spec.bins(); ++f) EXPECT_EQ(out(0, t, f), spec(2, t, f));
  EXPECT_THROW(apply_beamformer(spec, BeamformerWeights::pass_through(2, spec.bins(), 0)), ShapeError);
}

TEST(Beamformer, WeightsRasterRoundTrip) {
  PsdPair p;
  for (int f = 0; f < 5; ++f) {
    p.speech.push_back(random_hermitian_pd(3, 100 + f));
    p.noise.push_back(random_hermitian_pd(3, 200 + f));
  }
  const auto w = mvdr_weights(p);
  io::ByteReader in(encode_raster(weights_to_raster(w)).buffer());
  const auto back = weights_from_raster(decode_raster(in));
  EXPECT_EQ(back.bins, 5u);
  EXPECT_EQ(back.channels, 3u);
  for (std::size_t k = 0; k < w.w.size(); ++k) EXPECT_NEAR(std::abs(back.w[k] - w.w[k]), 0.0, 1e-6 * std::abs(w.w[k]));
}

TEST(Beamformer, SpeechPsdPrincipalEigenvectorFollowsSteering) {
  const auto g = ArrayGeometry::circular7();
  StftConfig cfg;
  const std::size_t n = 48000;
  const auto target = plane_wave(speechlike(n, 3), g, 60.0);
  const auto noise = plane_wave(speechlike(n, 4), g, 200.0);
  MultichannelPcm mix(7, n, 16000);
  for (std::size_t m = 0; m < 7; ++m)
    for (std::size_t i = 0; i < n; ++i) mix[m][i] = target[m][i] + noise[m][i];
  const auto spec = stft(mix, cfg);
  const auto mask = average_masks(oracle_irm(stft(target, cfg), stft(noise, cfg)));
  const auto psd = estimate_psd(spec, mask);
  const auto sf = steering_vector(g, 60.0, cfg);

  // Only bins carrying speech energy say anything about the speech PSD.
  const auto tspec = stft(target, cfg);
  std::vector<double> energy(cfg.num_bins(), 0.0);
  for (std::size_t t = 0; t < tspec.frames(); ++t)
    for (std::size_t f = 0; f < tspec.bins(); ++f) energy[f] += std::norm(tspec(0, t, f));
  const double med = median(energy);

  std::vector<double> errors;
  for (std::size_t f = 16; f < 240; ++f) {
    if (energy[f] < med) continue;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(psd.speech[f]);
    const CVector v = eig.eigenvectors().col(6);
    CVector d(7);
    for (std::size_t m = 0; m < 7; ++m) d(static_cast<Eigen::Index>(m)) = sf(m, f);
    const double c = std::abs(v.dot(d)) / (v.norm() * d.norm());
    errors.push_back(std::acos(std::min(1.0, c)) * 180.0 / std::numbers::pi);
  }
  ASSERT_GT(errors.size(), 50u);
  EXPECT_LT(median(errors), 5.0);
}

TEST(Beamformer, MvdrSuppressesDirectionalInterferer) {
  const auto g = ArrayGeometry::circular7();
  StftConfig cfg;
  const std::size_t n = 48000;
  const auto target = plane_wave(speechlike(n, 11), g, 0.0);
  const auto interf = plane_wave(speechlike(n, 12), g, 120.0);
  MultichannelPcm mix(7, n, 16000);
  for (std::size_t m = 0; m < 7; ++m)
    for (std::size_t i = 0; i < n; ++i) mix[m][i] = target[m][i] + interf[m][i];
  const auto ts = stft(target, cfg), is = stft(interf, cfg), spec = stft(mix, cfg);
  const auto w = mvdr_weights(estimate_psd(spec, average_masks(oracle_irm(ts, is))));
  const auto out = istft(apply_beamformer(spec, w));
  const double before = si_snr(mix[0], target[0]);
  const double after = si_snr(out[0], target[0]);
  EXPECT_GT(after - before, 10.0) << before << " -> " << after;
}
