#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

namespace mcfe {

using cdouble = std::complex<double>;

namespace detail {

// Plan creation in FFTW is not thread-safe; execution through the new-array
// interface is. Plans are created once per size and shared.
class FftPlanCache {
 public:
  struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
  };

  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  const Plans& get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* real = fftw_alloc_real(n);
    fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
    Plans p;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    p.forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, flags);
    p.inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, flags);
    fftw_free(real);
    fftw_free(spec);
    if (!p.forward || !p.inverse) throw std::runtime_error("fft: plan creation failed");
    return plans_.emplace(n, p).first->second;
  }

  ~FftPlanCache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

 private:
  FftPlanCache() = default;
  std::mutex mutex_;
  std::map<std::size_t, Plans> plans_;
};

}  // namespace detail

/// Unnormalized real-to-half-complex transform: out[k] = sum_n in[n] e^{-j2pi kn/N}.
/// `in` has N samples, `out` has N/2+1 bins.
inline void rfft(std::span<const double> in, std::span<cdouble> out) {
  const std::size_t n = in.size();
  if (out.size() != n / 2 + 1) throw std::invalid_argument("rfft: output size must be N/2+1");
  const auto& plans = detail::FftPlanCache::instance().get(n);
  // FFTW's r2c does not write to its input, the cast is safe.
  fftw_execute_dft_r2c(plans.forward, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

/// Inverse of rfft including the 1/N factor. Imaginary parts of bins 0 and N/2 are ignored.
inline void irfft(std::span<const cdouble> in, std::span<double> out) {
  const std::size_t n = out.size();
  if (in.size() != n / 2 + 1) throw std::invalid_argument("irfft: input size must be N/2+1");
  const auto& plans = detail::FftPlanCache::instance().get(n);
  // c2r destroys its input.
  std::unique_ptr<cdouble[]> scratch(new cdouble[in.size()]);
  std::copy(in.begin(), in.end(), scratch.get());
  fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(scratch.get()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Linear convolution via zero-padded real FFTs; output length is
/// x.size() + h.size() - 1.
inline std::vector<double> fft_convolve(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) return {};
  const std::size_t out_len = x.size() + h.size() - 1;
  const std::size_t n = next_pow2(out_len);
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<cdouble> fa(n / 2 + 1), fb(n / 2 + 1);
  rfft(a, fa);
  rfft(b, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  irfft(fa, a);
  a.resize(out_len);
  return a;
}

}  // namespace mcfe
